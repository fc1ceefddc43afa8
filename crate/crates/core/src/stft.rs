//! Short-time Fourier transform with a sqrt-Hann analysis/synthesis pair.
//!
//! Signals are reflect-padded by `n_fft - hop` samples on both sides (after
//! zero-padding inputs shorter than `n_fft` up to `n_fft`), then zero-padded
//! at the tail up to a whole number of hops. Every original sample is thereby
//! covered by the full `n_fft / hop` overlapping frames, and the inverse trims
//! the padding again so the output length equals the input length.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::{Error, Result};

pub const DEFAULT_HOP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    SqrtHann,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        match self {
            Window::SqrtHann => (0..n)
                .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).sqrt())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
    pub sample_rate_hz: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            n_fft: crate::designer::DEFAULT_N_FFT,
            hop: DEFAULT_HOP,
            window: Window::SqrtHann,
            sample_rate_hz: crate::geometry::DEFAULT_SAMPLE_RATE,
        }
    }
}

impl StftConfig {
    pub fn new(n_fft: usize, hop: usize, sample_rate_hz: f64) -> Result<Self> {
        let cfg = Self {
            n_fft,
            hop,
            window: Window::SqrtHann,
            sample_rate_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || !self.n_fft.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_fft must be even and >= 2, got {}",
                self.n_fft
            )));
        }
        if self.hop == 0 || !self.n_fft.is_multiple_of(self.hop) || self.hop > self.n_fft / 2 {
            return Err(Error::Config(format!(
                "hop {} must divide n_fft {} and be at most n_fft/2",
                self.hop, self.n_fft
            )));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Padding applied on each side before framing.
    pub fn edge_pad(&self) -> usize {
        self.n_fft - self.hop
    }

    /// Length after edge and tail padding of a `len`-sample signal.
    pub fn padded_len(&self, len: usize) -> usize {
        let work = len.max(self.n_fft);
        let total = work + 2 * self.edge_pad();
        (total - self.n_fft).div_ceil(self.hop) * self.hop + self.n_fft
    }

    /// `floor((padded_len - n_fft) / hop) + 1`.
    pub fn num_frames(&self, len: usize) -> usize {
        (self.padded_len(len) - self.n_fft) / self.hop + 1
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate_hz / self.n_fft as f64
    }
}

/// Complex STFT of a multichannel signal, `(channels, bins, frames)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramTensor {
    pub data: Array3<Complex64>,
    pub config: StftConfig,
    /// Length of the time-domain signal this tensor reconstructs to.
    pub signal_len: usize,
}

impl SpectrogramTensor {
    /// Zero tensor shaped for a `signal_len`-sample signal.
    pub fn zeros(channels: usize, signal_len: usize, config: StftConfig) -> Self {
        Self {
            data: Array3::zeros((channels, config.n_bins(), config.num_frames(signal_len))),
            config,
            signal_len,
        }
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn frames(&self) -> usize {
        self.data.dim().2
    }
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

fn pad_channel(x: &[f64], cfg: &StftConfig) -> Vec<f64> {
    let mut work = x.to_vec();
    work.resize(x.len().max(cfg.n_fft), 0.0);
    let p = cfg.edge_pad();
    let n = work.len();
    let mut out = Vec::with_capacity(cfg.padded_len(x.len()));
    out.extend((1..=p).rev().map(|i| work[i]));
    out.extend_from_slice(&work);
    out.extend((1..=p).map(|i| work[n - 1 - i]));
    out.resize(cfg.padded_len(x.len()), 0.0);
    out
}

/// Forward STFT of `signal` (`channels × samples`).
pub fn stft_forward(signal: ArrayView2<f64>, cfg: &StftConfig) -> Result<SpectrogramTensor> {
    cfg.validate()?;
    let (channels, len) = signal.dim();
    if channels == 0 || len == 0 {
        return Err(Error::Empty("signal has no samples".into()));
    }
    let plans = Plans::new(cfg.n_fft);
    let window = cfg.window.coefficients(cfg.n_fft);
    let frames = cfg.num_frames(len);
    let n_bins = cfg.n_bins();

    let per_channel: Vec<Array2<Complex64>> = (0..channels)
        .into_par_iter()
        .map(|c| {
            let x: Vec<f64> = signal.row(c).iter().copied().collect();
            let padded = pad_channel(&x, cfg);
            let mut out = Array2::zeros((n_bins, frames));
            let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
            let mut scratch =
                vec![Complex64::new(0.0, 0.0); plans.forward.get_inplace_scratch_len()];
            for t in 0..frames {
                let start = t * cfg.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = Complex64::new(padded[start + i] * window[i], 0.0);
                }
                plans.forward.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..n_bins {
                    out[[k, t]] = buf[k];
                }
            }
            out
        })
        .collect();

    let mut data = Array3::zeros((channels, n_bins, frames));
    for (c, m) in per_channel.into_iter().enumerate() {
        data.index_axis_mut(Axis(0), c).assign(&m);
    }
    Ok(SpectrogramTensor {
        data,
        config: *cfg,
        signal_len: len,
    })
}

/// Inverse DFT of one frame from its non-negative bins, with the negative
/// half filled in by conjugate symmetry. DC and Nyquist imaginary parts are
/// dropped. Returns the complex time frame (imaginary part ~ 0).
pub(crate) fn inverse_frame(
    bins: impl Iterator<Item = Complex64>,
    n_fft: usize,
    plan: &dyn Fft<f64>,
    buf: &mut [Complex64],
    scratch: &mut [Complex64],
) {
    let half = n_fft / 2;
    for (k, v) in bins.enumerate() {
        buf[k] = v;
    }
    buf[0].im = 0.0;
    buf[half].im = 0.0;
    for k in 1..half {
        buf[n_fft - k] = buf[k].conj();
    }
    plan.process_with_scratch(buf, scratch);
    let scale = 1.0 / n_fft as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
}

/// Inverse STFT by weighted overlap-add, trimmed to `spec.signal_len`.
pub fn stft_inverse(spec: &SpectrogramTensor) -> Result<Array2<f64>> {
    let cfg = spec.config;
    cfg.validate()?;
    let (channels, n_bins, frames) = spec.data.dim();
    if n_bins != cfg.n_bins() {
        return Err(Error::Shape(format!(
            "tensor has {n_bins} bins, config expects {}",
            cfg.n_bins()
        )));
    }
    if spec.signal_len == 0 || frames != cfg.num_frames(spec.signal_len) {
        return Err(Error::Shape(format!(
            "tensor has {frames} frames, a {}-sample signal needs {}",
            spec.signal_len,
            cfg.num_frames(spec.signal_len)
        )));
    }
    let plans = Plans::new(cfg.n_fft);
    let window = cfg.window.coefficients(cfg.n_fft);
    let padded_len = cfg.padded_len(spec.signal_len);
    let mut norm = vec![0.0; padded_len];
    for t in 0..frames {
        for (i, w) in window.iter().enumerate() {
            norm[t * cfg.hop + i] += w * w;
        }
    }
    let p = cfg.edge_pad();
    let len = spec.signal_len;

    let per_channel: Vec<Vec<f64>> = (0..channels)
        .into_par_iter()
        .map(|c| {
            let chan = spec.data.index_axis(Axis(0), c);
            let mut acc = vec![0.0; padded_len];
            let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
            let mut scratch =
                vec![Complex64::new(0.0, 0.0); plans.inverse.get_inplace_scratch_len()];
            for t in 0..frames {
                inverse_frame(
                    chan.column(t).iter().copied(),
                    cfg.n_fft,
                    plans.inverse.as_ref(),
                    &mut buf,
                    &mut scratch,
                );
                let start = t * cfg.hop;
                for (i, v) in buf.iter().enumerate() {
                    acc[start + i] += v.re * window[i];
                }
            }
            (p..p + len).map(|i| acc[i] / norm[i]).collect()
        })
        .collect();

    let mut out = Array2::zeros((channels, len));
    for (c, row) in per_channel.into_iter().enumerate() {
        out.row_mut(c).assign(&ndarray::Array1::from(row));
    }
    Ok(out)
}
