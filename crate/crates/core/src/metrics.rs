//! Speaker-count confusion scores and band-limited power ratios.

use ndarray::Array2;

use crate::stft::{stft_forward, StftConfig};
use crate::{Error, Result};

/// Magnitude cap for power ratios with a silent denominator.
pub const SIR_CAP_DB: f64 = 120.0;

/// Counts `N_k^i` of test items with true speaker count `k` labelled `i`.
/// Rows and columns are indexed directly by count, starting at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountConfusion {
    counts: Array2<u64>,
    row_totals: Vec<u64>,
}

impl CountConfusion {
    /// `counts[[k, i]]` = number of items with true count `k` estimated as `i`.
    pub fn new(counts: Array2<u64>) -> Self {
        let row_totals = counts.rows().into_iter().map(|r| r.sum()).collect();
        Self { counts, row_totals }
    }

    /// Tallies `(true_count, estimated_count)` pairs.
    pub fn from_pairs(pairs: &[(usize, usize)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("no count pairs".into()));
        }
        let dim = pairs.iter().map(|&(k, i)| k.max(i)).max().unwrap_or(0) + 1;
        let mut counts = Array2::zeros((dim, dim));
        for &(k, i) in pairs {
            counts[[k, i]] += 1;
        }
        Ok(Self::new(counts))
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    /// `N_k`.
    pub fn row_total(&self, k: usize) -> u64 {
        self.row_totals.get(k).copied().unwrap_or(0)
    }

    pub fn max_true_count(&self) -> usize {
        self.counts.nrows().saturating_sub(1)
    }

    pub fn max_estimated_count(&self) -> usize {
        self.counts.ncols().saturating_sub(1)
    }

    /// `N_k^i / N_k`.
    pub fn score(&self, i: usize, k: usize) -> Result<f64> {
        let total = self.row_total(k);
        if total == 0 {
            return Err(Error::EmptyRow(k));
        }
        let n = if i < self.counts.ncols() {
            self.counts[[k, i]]
        } else {
            0
        };
        Ok(n as f64 / total as f64)
    }

    /// `(k, i, score)` for every true count with at least one item and every
    /// estimated count column.
    pub fn score_table(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for k in 0..self.counts.nrows() {
            if self.row_total(k) == 0 {
                continue;
            }
            for i in 0..self.counts.ncols() {
                out.push((k, i, self.score(i, k).expect("non-empty row")));
            }
        }
        out
    }
}

/// Free-function form of [`CountConfusion::score`].
pub fn confusion_score(conf: &CountConfusion, i: usize, k: usize) -> Result<f64> {
    conf.score(i, k)
}

/// Summed STFT power over bins whose center frequency lies in `band_hz`.
pub fn band_power(x: &[f64], band_hz: (f64, f64), fs: f64) -> Result<f64> {
    let cfg = StftConfig {
        sample_rate_hz: fs,
        ..StftConfig::default()
    };
    let view = ndarray::ArrayView2::from_shape((1, x.len()), x)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let spec = stft_forward(view, &cfg)?;
    let mut p = 0.0;
    for b in 0..cfg.n_bins() {
        let f = cfg.bin_frequency(b);
        if f < band_hz.0 || f > band_hz.1 {
            continue;
        }
        p += spec.data.slice(ndarray::s![0, b, ..]).iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    Ok(p)
}

/// `10 log10(P_target / P_other)` over STFT bins whose center frequency lies
/// in `band_hz` (inclusive). Capped at ±120 dB when either side is silent;
/// two silent inputs give 0 dB.
pub fn power_ratio_db(target: &[f64], other: &[f64], band_hz: (f64, f64), fs: f64) -> Result<f64> {
    if target.len() != other.len() {
        return Err(Error::Mismatch {
            what: "signal length",
            expected: target.len().to_string(),
            found: other.len().to_string(),
        });
    }
    if target.is_empty() {
        return Err(Error::Empty("power ratio of empty signals".into()));
    }
    let (lo, hi) = band_hz;
    if !(lo >= 0.0 && lo < hi && hi <= fs / 2.0) {
        return Err(Error::Config(format!(
            "band ({lo}, {hi}) Hz must be increasing and within Nyquist {}",
            fs / 2.0
        )));
    }
    let pt = band_power(target, band_hz, fs)?;
    let po = band_power(other, band_hz, fs)?;
    Ok(match (pt > 0.0, po > 0.0) {
        (true, true) => (10.0 * (pt.log10() - po.log10())).clamp(-SIR_CAP_DB, SIR_CAP_DB),
        (true, false) => SIR_CAP_DB,
        (false, true) => -SIR_CAP_DB,
        (false, false) => 0.0,
    })
}
