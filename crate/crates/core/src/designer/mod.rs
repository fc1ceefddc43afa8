//! Closed-form least-squares design of fixed sector beamformers.
//!
//! For every STFT bin the beam response `wᴴ d(θ, φ, f)` is fitted to the
//! sector indicator in the weighted least-squares sense over the whole
//! sphere. With `G = Σ ω d dᴴ` over all quadrature nodes and `g_s = Σ ω d`
//! over the nodes inside sector `s`, the minimizer is `w_s = G⁻¹ g_s`,
//! computed here with diagonal loading and a Hermitian factorization.

mod bank_io;
mod quadrature;

pub use bank_io::{read_bank, write_bank, write_bank_csv};
pub use quadrature::{build_grid, GridNode, QuadratureGrid, WeightingMode};

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::geometry::{
    relative_delays, steering_vector, AngularSector, ArrayGeometry, Direction, WaveContext,
};
use crate::linalg::LoadedSolver;
use crate::{Error, Result};

pub const DEFAULT_N_FFT: usize = 512;
pub const DEFAULT_LOADING: f64 = 1e-6;
pub const DEFAULT_ANGLE_STEP_DEG: f64 = 1.0;

/// Binary target: 1 inside the sector, 0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorTarget {
    pub sector: AngularSector,
}

impl SectorTarget {
    pub fn new(sector: AngularSector) -> Self {
        Self { sector }
    }

    pub fn evaluate(&self, dir: &Direction) -> f64 {
        if self.sector.contains(dir) {
            1.0
        } else {
            0.0
        }
    }
}

/// Design hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub n_fft: usize,
    pub sample_rate_hz: f64,
    /// Relative to `trace(G) / I`.
    pub diagonal_loading: f64,
    pub angle_step_deg: f64,
    pub weighting_mode: WeightingMode,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            n_fft: DEFAULT_N_FFT,
            sample_rate_hz: crate::geometry::DEFAULT_SAMPLE_RATE,
            diagonal_loading: DEFAULT_LOADING,
            angle_step_deg: DEFAULT_ANGLE_STEP_DEG,
            weighting_mode: WeightingMode::ElevationCosine,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 64 || !self.n_fft.is_power_of_two() {
            return Err(Error::Config(format!(
                "n_fft must be a power of two >= 64, got {}",
                self.n_fft
            )));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.diagonal_loading >= 0.0 && self.diagonal_loading.is_finite()) {
            return Err(Error::Config(format!(
                "diagonal_loading must be >= 0, got {}",
                self.diagonal_loading
            )));
        }
        quadrature::check_step(self.angle_step_deg)
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate_hz / self.n_fft as f64
    }
}

/// Weighted Gram matrix `Σ ω d dᴴ` over every grid node.
pub fn gram_matrix(
    geom: &ArrayGeometry,
    grid: &QuadratureGrid,
    freq_hz: f64,
    ctx: &WaveContext,
) -> Array2<Complex64> {
    let delays = NodeDelays::new(geom, grid, ctx);
    let mut acc = BinAccumulator::new(geom.num_mics(), 0);
    delays.accumulate(freq_hz, &[], &mut acc);
    acc.gram()
}

/// Weighted steering moment `Σ ω d` over the grid nodes inside the target
/// sector.
pub fn target_moment(
    geom: &ArrayGeometry,
    grid: &QuadratureGrid,
    target: &SectorTarget,
    freq_hz: f64,
    ctx: &WaveContext,
) -> Vec<Complex64> {
    let n = geom.num_mics();
    let mut g = vec![Complex64::new(0.0, 0.0); n];
    for node in grid.nodes() {
        if target.evaluate(&node.direction) == 0.0 {
            continue;
        }
        let d = steering_vector(geom, &node.direction, freq_hz, ctx);
        for (gi, di) in g.iter_mut().zip(&d) {
            *gi += node.weight * di;
        }
    }
    g
}

pub use crate::linalg::solve_sector_weights;

/// Per-bin numerical diagnostics from a design run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinDiagnostics {
    pub bin: usize,
    pub freq_hz: f64,
    /// 1-norm condition number of the loaded Gram matrix.
    pub condition: f64,
}

/// Designed weights `ŵ_s(f)` for every bin, microphone and sector.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerBank {
    weights: Array3<Complex64>,
    geometry: ArrayGeometry,
    sectors: Vec<AngularSector>,
    config: DesignConfig,
    ctx: WaveContext,
}

impl BeamformerBank {
    /// Assembles a bank from explicit weights of shape `(n_bins, I, S)`.
    pub fn from_parts(
        weights: Array3<Complex64>,
        geometry: ArrayGeometry,
        sectors: Vec<AngularSector>,
        config: DesignConfig,
        ctx: WaveContext,
    ) -> Result<Self> {
        config.validate()?;
        let want = (config.n_bins(), geometry.num_mics(), sectors.len());
        if weights.dim() != want {
            return Err(Error::Shape(format!(
                "weights have shape {:?}, expected {:?}",
                weights.dim(),
                want
            )));
        }
        if sectors.is_empty() {
            return Err(Error::Sector("at least one sector is required".into()));
        }
        if weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::Shape("weights contain non-finite values".into()));
        }
        if config.sample_rate_hz != ctx.sample_rate_hz() {
            return Err(Error::Mismatch {
                what: "sample rate",
                expected: config.sample_rate_hz.to_string(),
                found: ctx.sample_rate_hz().to_string(),
            });
        }
        Ok(Self {
            weights,
            geometry,
            sectors,
            config,
            ctx,
        })
    }

    /// Selector bank: output `s` is input channel `channels[s]` at every
    /// bin. Sectors are full-sphere placeholders labelled by channel.
    pub fn selector(
        geometry: ArrayGeometry,
        channels: &[usize],
        config: DesignConfig,
        ctx: WaveContext,
    ) -> Result<Self> {
        let n = geometry.num_mics();
        let mut weights = Array3::zeros((config.n_bins(), n, channels.len()));
        let mut sectors = Vec::with_capacity(channels.len());
        for (s, &ch) in channels.iter().enumerate() {
            if ch >= n {
                return Err(Error::IndexOutOfRange {
                    what: "channel",
                    index: ch,
                    count: n,
                });
            }
            weights
                .slice_mut(ndarray::s![.., ch, s])
                .fill(Complex64::new(1.0, 0.0));
            sectors.push(AngularSector::new(format!("ch{ch}"), 0.0, 360.0, -90.0, 90.0)?);
        }
        Self::from_parts(weights, geometry, sectors, config, ctx)
    }

    /// `I = S` bank passing every channel straight through.
    pub fn identity(geometry: ArrayGeometry, config: DesignConfig, ctx: WaveContext) -> Result<Self> {
        let channels: Vec<usize> = (0..geometry.num_mics()).collect();
        Self::selector(geometry, &channels, config, ctx)
    }

    /// Weight tensor of shape `(n_bins, I, S)`.
    pub fn weights(&self) -> &Array3<Complex64> {
        &self.weights
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn sectors(&self) -> &[AngularSector] {
        &self.sectors
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    pub fn wave_context(&self) -> &WaveContext {
        &self.ctx
    }

    pub fn n_bins(&self) -> usize {
        self.weights.dim().0
    }

    pub fn num_mics(&self) -> usize {
        self.weights.dim().1
    }

    pub fn num_sectors(&self) -> usize {
        self.weights.dim().2
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        self.config.bin_frequency(bin)
    }

    /// Weights `ŵ_s(f_b)` as a vector over microphones.
    pub fn sector_weights(&self, sector: usize, bin: usize) -> Result<Vec<Complex64>> {
        self.check_indices(sector, bin)?;
        Ok(self
            .weights
            .slice(ndarray::s![bin, .., sector])
            .to_vec())
    }

    fn check_indices(&self, sector: usize, bin: usize) -> Result<()> {
        if sector >= self.num_sectors() {
            return Err(Error::IndexOutOfRange {
                what: "sector",
                index: sector,
                count: self.num_sectors(),
            });
        }
        if bin >= self.n_bins() {
            return Err(Error::IndexOutOfRange {
                what: "bin",
                index: bin,
                count: self.n_bins(),
            });
        }
        Ok(())
    }
}

/// Beam response `ŵ_sᴴ(f) d(θ, φ, f)` of one sector at one bin.
pub fn beam_response(
    bank: &BeamformerBank,
    sector_index: usize,
    dir: &Direction,
    bin_index: usize,
) -> Result<Complex64> {
    bank.check_indices(sector_index, bin_index)?;
    let d = steering_vector(
        &bank.geometry,
        dir,
        bank.bin_frequency(bin_index),
        &bank.ctx,
    );
    let w = bank.weights.slice(ndarray::s![bin_index, .., sector_index]);
    Ok(w.iter().zip(&d).map(|(w, d)| w.conj() * d).sum())
}

/// Designs the full bank, one independent solve per STFT bin.
pub fn design_bank(
    geom: &ArrayGeometry,
    sectors: &[AngularSector],
    cfg: &DesignConfig,
    ctx: &WaveContext,
) -> Result<BeamformerBank> {
    design_bank_with_diagnostics(geom, sectors, cfg, ctx).map(|(bank, _)| bank)
}

/// [`design_bank`] plus the per-bin condition numbers.
///
/// Bins are processed as a parallel map on the current rayon pool. Each bin
/// is computed sequentially and independently, so results do not depend on
/// the thread count.
pub fn design_bank_with_diagnostics(
    geom: &ArrayGeometry,
    sectors: &[AngularSector],
    cfg: &DesignConfig,
    ctx: &WaveContext,
) -> Result<(BeamformerBank, Vec<BinDiagnostics>)> {
    cfg.validate()?;
    if sectors.is_empty() {
        return Err(Error::Sector("at least one sector is required".into()));
    }
    if cfg.sample_rate_hz != ctx.sample_rate_hz() {
        return Err(Error::Mismatch {
            what: "sample rate",
            expected: cfg.sample_rate_hz.to_string(),
            found: ctx.sample_rate_hz().to_string(),
        });
    }
    let grid = build_grid(cfg.angle_step_deg, cfg.weighting_mode)?;
    let delays = NodeDelays::new(geom, &grid, ctx);
    let membership = grid.membership(sectors);
    let n_mics = geom.num_mics();
    let n_sectors = sectors.len();

    let per_bin: Vec<Result<(Vec<Vec<Complex64>>, f64)>> = (0..cfg.n_bins())
        .into_par_iter()
        .map(|bin| {
            let freq_hz = cfg.bin_frequency(bin);
            let mut acc = BinAccumulator::new(n_mics, n_sectors);
            delays.accumulate(freq_hz, &membership, &mut acc);
            let gram = acc.gram();
            let wrap = |sector: usize, e: Error| Error::BinSolve {
                bin,
                freq_hz,
                sector,
                source: Box::new(e),
            };
            let solver =
                LoadedSolver::new(gram.view(), cfg.diagonal_loading).map_err(|e| wrap(0, e))?;
            let mut out = Vec::with_capacity(n_sectors);
            for (s, moment) in acc.moments.iter().enumerate() {
                let w = solver.solve(moment);
                if w.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(wrap(
                        s,
                        Error::Singular {
                            condition: solver.condition(),
                        },
                    ));
                }
                out.push(w);
            }
            Ok((out, solver.condition()))
        })
        .collect();

    let mut weights = Array3::zeros((cfg.n_bins(), n_mics, n_sectors));
    let mut diagnostics = Vec::with_capacity(cfg.n_bins());
    for (bin, res) in per_bin.into_iter().enumerate() {
        let (ws, condition) = res?;
        for (s, w) in ws.iter().enumerate() {
            for (i, v) in w.iter().enumerate() {
                weights[[bin, i, s]] = *v;
            }
        }
        diagnostics.push(BinDiagnostics {
            bin,
            freq_hz: cfg.bin_frequency(bin),
            condition,
        });
    }
    let bank = BeamformerBank::from_parts(
        weights,
        geom.clone(),
        sectors.to_vec(),
        cfg.clone(),
        *ctx,
    )?;
    Ok((bank, diagnostics))
}

/// Frequency-independent propagation leads for every grid node, grouped by
/// elevation ring.
struct NodeDelays<'g> {
    grid: &'g QuadratureGrid,
    /// `nodes × I`, row-major.
    delays: Vec<f64>,
    n_mics: usize,
}

impl<'g> NodeDelays<'g> {
    fn new(geom: &ArrayGeometry, grid: &'g QuadratureGrid, ctx: &WaveContext) -> Self {
        let delays = grid
            .nodes()
            .iter()
            .flat_map(|node| relative_delays(geom, &node.direction, ctx))
            .collect();
        Self {
            grid,
            delays,
            n_mics: geom.num_mics(),
        }
    }

    /// Adds every node's contribution at `freq_hz`. `membership[node]` lists
    /// the sectors that node belongs to (may be empty for Gram-only use).
    fn accumulate(&self, freq_hz: f64, membership: &[Vec<usize>], acc: &mut BinAccumulator) {
        let n = self.n_mics;
        let mut d = vec![Complex64::new(0.0, 0.0); n];
        let mut ring_gram = vec![Complex64::new(0.0, 0.0); n * n];
        let mut ring_moments = vec![vec![Complex64::new(0.0, 0.0); n]; acc.moments.len()];
        let omega = -2.0 * PI * freq_hz;

        for ring in self.grid.rings() {
            ring_gram.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            ring_moments
                .iter_mut()
                .for_each(|m| m.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0)));
            for idx in ring {
                let w = self.grid.nodes()[idx].weight;
                if w == 0.0 {
                    continue;
                }
                let tau = &self.delays[idx * n..(idx + 1) * n];
                for (di, t) in d.iter_mut().zip(tau) {
                    *di = Complex64::cis(omega * t);
                }
                for a in 0..n {
                    let wa = d[a] * w;
                    for b in a..n {
                        ring_gram[a * n + b] += wa * d[b].conj();
                    }
                }
                if let Some(sectors) = membership.get(idx) {
                    for &s in sectors {
                        for (m, di) in ring_moments[s].iter_mut().zip(&d) {
                            *m += w * di;
                        }
                    }
                }
            }
            for (g, r) in acc.gram_upper.iter_mut().zip(&ring_gram) {
                *g += r;
            }
            for (m, r) in acc.moments.iter_mut().zip(&ring_moments) {
                for (a, b) in m.iter_mut().zip(r) {
                    *a += b;
                }
            }
        }
    }
}

struct BinAccumulator {
    n: usize,
    gram_upper: Vec<Complex64>,
    moments: Vec<Vec<Complex64>>,
}

impl BinAccumulator {
    fn new(n: usize, n_sectors: usize) -> Self {
        Self {
            n,
            gram_upper: vec![Complex64::new(0.0, 0.0); n * n],
            moments: vec![vec![Complex64::new(0.0, 0.0); n]; n_sectors],
        }
    }

    /// Full Hermitian matrix from the accumulated upper triangle; the
    /// diagonal is forced real.
    fn gram(&self) -> Array2<Complex64> {
        let n = self.n;
        Array2::from_shape_fn((n, n), |(a, b)| {
            if a == b {
                Complex64::new(self.gram_upper[a * n + a].re, 0.0)
            } else if a < b {
                self.gram_upper[a * n + b]
            } else {
                self.gram_upper[b * n + a].conj()
            }
        })
    }
}

#[cfg(test)]
mod tests;
