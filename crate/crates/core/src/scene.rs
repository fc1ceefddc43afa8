//! Anechoic far-field scene simulation.
//!
//! Each source is delayed per microphone in the STFT domain by multiplying
//! its spectrum with the steering vector, which is the same propagation model
//! the designer integrates over. Rendered scenes are therefore exactly
//! consistent with the beam responses computed from the bank.

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::designer::BeamformerBank;
use crate::geometry::{relative_delays, sector_of, steering_from_delays, ArrayGeometry, Direction, WaveContext};
use crate::metrics::{power_ratio_db, SIR_CAP_DB};
use crate::pipeline::{apply_bank, MultichannelAudio};
use crate::stft::{stft_forward, stft_inverse, SpectrogramTensor, StftConfig};
use crate::{Error, Result};

/// Band used for SIR figures.
pub const SIR_BAND_HZ: (f64, f64) = (300.0, 4000.0);

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSource {
    pub direction: Direction,
    pub signal: Vec<f64>,
    /// Linear amplitude gain.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub sources: Vec<SceneSource>,
    /// RMS of the white Gaussian sensor noise.
    pub noise_level: f64,
    pub geometry: ArrayGeometry,
    pub ctx: WaveContext,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Config("scene needs at least one source".into()));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if !(s.gain >= 0.0 && s.gain.is_finite()) {
                return Err(Error::Config(format!(
                    "source {i}: gain must be >= 0, got {}",
                    s.gain
                )));
            }
            if s.signal.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("source {i}: signal has non-finite samples")));
            }
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::Config(format!(
                "noise_level must be >= 0, got {}",
                self.noise_level
            )));
        }
        if self.is_empty() {
            return Err(Error::Empty("all source signals are empty".into()));
        }
        Ok(())
    }

    /// Rendered length: the longest source signal.
    pub fn len(&self) -> usize {
        self.sources.iter().map(|s| s.signal.len()).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same scene restricted to the listed sources and without noise.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            sources: self
                .sources
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, s)| s.clone())
                .collect(),
            noise_level: 0.0,
            ..self.clone()
        }
    }
}

/// Renders the array signals of a scene.
pub fn render_scene(spec: &SceneSpec, cfg: &StftConfig) -> Result<MultichannelAudio> {
    spec.validate()?;
    if cfg.sample_rate_hz != spec.ctx.sample_rate_hz() {
        return Err(Error::Mismatch {
            what: "sample rate",
            expected: spec.ctx.sample_rate_hz().to_string(),
            found: cfg.sample_rate_hz.to_string(),
        });
    }
    let len = spec.len();
    let n_mics = spec.geometry.num_mics();
    let freqs: Vec<f64> = (0..cfg.n_bins()).map(|b| cfg.bin_frequency(b)).collect();

    let contributions: Vec<Array3<Complex64>> = spec
        .sources
        .par_iter()
        .map(|src| {
            let mut x = src.signal.clone();
            x.resize(len, 0.0);
            let mono = Array2::from_shape_vec((1, len), x).expect("1 x len");
            let sx = stft_forward(mono.view(), cfg)?;
            let tau = relative_delays(&spec.geometry, &src.direction, &spec.ctx);
            let frames = sx.frames();
            let mut out = Array3::zeros((n_mics, freqs.len(), frames));
            for (b, &f) in freqs.iter().enumerate() {
                let d = steering_from_delays(&tau, f);
                for (i, di) in d.iter().enumerate() {
                    let scale = di * src.gain;
                    for t in 0..frames {
                        out[[i, b, t]] = scale * sx.data[[0, b, t]];
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut total = SpectrogramTensor::zeros(n_mics, len, *cfg);
    for c in &contributions {
        total.data += c;
    }
    let mut samples = stft_inverse(&total)?;
    if spec.noise_level > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_level)
            .map_err(|e| Error::Config(format!("noise_level: {e}")))?;
        for mut row in samples.axis_iter_mut(Axis(0)) {
            row.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        }
    }
    MultichannelAudio::new(samples, spec.ctx.sample_rate_hz())
}

/// Band-limited Gaussian noise with a speech-like long-term spectrum and a
/// 4 Hz syllabic envelope, normalized to unit RMS.
pub fn speech_shaped_noise(len: usize, sample_rate_hz: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    // one-pole high-pass near 100 Hz, one-pole low-pass near 500 Hz
    let hp = (-2.0 * std::f64::consts::PI * 100.0 / sample_rate_hz).exp();
    let lp = (-2.0 * std::f64::consts::PI * 500.0 / sample_rate_hz).exp();
    let (mut prev_x, mut hp_y, mut lp_y) = (0.0, 0.0, 0.0);
    let mut out: Vec<f64> = (0..len)
        .map(|n| {
            let x: f64 = normal.sample(&mut rng);
            hp_y = hp * (hp_y + x - prev_x);
            prev_x = x;
            lp_y = (1.0 - lp) * hp_y + lp * lp_y;
            let t = n as f64 / sample_rate_hz;
            let env = 0.2 + 0.8 * (0.5 - 0.5 * (2.0 * std::f64::consts::PI * 4.0 * t).cos());
            lp_y * env
        })
        .collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// SIR figures for one bank output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorSir {
    pub sector: usize,
    pub label: String,
    pub output_sir_db: f64,
    pub reference_sir_db: f64,
    /// `output_sir_db - reference_sir_db`.
    pub gain_db: f64,
}

/// Target-versus-interferer ratio at every bank output, relative to the same
/// ratio at reference microphone 0, band-limited to 300–4000 Hz. Also returns
/// the index of the sector containing the target.
pub fn per_sector_sir(
    scene: &SceneSpec,
    bank: &BeamformerBank,
    target_source_index: usize,
    cfg: &StftConfig,
) -> Result<(usize, Vec<SectorSir>)> {
    scene.validate()?;
    if scene.sources.len() < 2 {
        return Err(Error::Config("SIR needs a target and at least one interferer".into()));
    }
    let target = scene
        .sources
        .get(target_source_index)
        .ok_or(Error::IndexOutOfRange {
            what: "source",
            index: target_source_index,
            count: scene.sources.len(),
        })?;
    if bank.num_mics() != scene.geometry.num_mics() {
        return Err(Error::Mismatch {
            what: "channel count",
            expected: bank.num_mics().to_string(),
            found: scene.geometry.num_mics().to_string(),
        });
    }
    let target_sector =
        sector_of(bank.sectors(), &target.direction).ok_or(Error::OutsideSectors {
            azimuth_deg: target.direction.azimuth_deg(),
            elevation_deg: target.direction.elevation_deg(),
        })?;

    let only_target = scene.subset(|i| i == target_source_index);
    let interferers = scene.subset(|i| i != target_source_index);
    let silent = interferers.sources.iter().all(|s| s.gain == 0.0);

    let fs = scene.ctx.sample_rate_hz();
    let t_mics = render_scene(&only_target, cfg)?;
    let i_mics = render_scene(&interferers, cfg)?;
    let t_out = apply_bank(&t_mics, bank, cfg)?;
    let i_out = apply_bank(&i_mics, bank, cfg)?;

    let row = |a: &MultichannelAudio, c: usize| a.samples().row(c).to_vec();
    let reference = power_ratio_db(&row(&t_mics, 0), &row(&i_mics, 0), SIR_BAND_HZ, fs)?;
    let rows = (0..bank.num_sectors())
        .map(|s| {
            let (output_sir_db, gain_db) = if silent {
                (SIR_CAP_DB, SIR_CAP_DB)
            } else {
                let o = power_ratio_db(&row(&t_out, s), &row(&i_out, s), SIR_BAND_HZ, fs)?;
                (o, o - reference)
            };
            Ok(SectorSir {
                sector: s,
                label: bank.sectors()[s].label().to_string(),
                output_sir_db,
                reference_sir_db: reference,
                gain_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((target_sector, rows))
}

/// SIR gain in dB of the sector containing the target source. A scene whose
/// interferers are all silent reports the 120 dB cap.
pub fn sector_sir_gain(
    scene: &SceneSpec,
    bank: &BeamformerBank,
    target_source_index: usize,
    cfg: &StftConfig,
) -> Result<f64> {
    let (sector, rows) = per_sector_sir(scene, bank, target_source_index, cfg)?;
    Ok(rows[sector].gain_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designer::{design_bank, DesignConfig};
    use crate::geometry::{circular_array, quadrant_sectors};

    fn source(az: f64, el: f64, signal: Vec<f64>, gain: f64) -> SceneSource {
        SceneSource {
            direction: Direction::new(az, el).unwrap(),
            signal,
            gain,
        }
    }

    fn scene(geometry: ArrayGeometry, sources: Vec<SceneSource>, noise: f64) -> SceneSpec {
        SceneSpec {
            sources,
            noise_level: noise,
            geometry,
            ctx: WaveContext::default(),
            seed: 42,
        }
    }

    fn power(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn mic_at_origin_hears_the_source() {
        let mut mics = circular_array(4, 0.1, 0.0).unwrap().mics().to_vec();
        mics.push([0.0; 3]);
        let geom = ArrayGeometry::new("with-center", mics).unwrap();
        let s = speech_shaped_noise(8000, 16_000.0, 1);
        let spec = scene(geom, vec![source(70.0, 20.0, s.clone(), 1.0)], 0.0);
        let out = render_scene(&spec, &StftConfig::default()).unwrap();
        let ch = out.samples().row(4);
        let err: f64 = ch.iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let norm: f64 = s.iter().map(|v| v * v).sum();
        assert!((err / norm).sqrt() <= 1e-6);
    }

    #[test]
    fn channels_have_equal_power() {
        let s = speech_shaped_noise(16_000, 16_000.0, 2);
        let spec = scene(circular_array(8, 0.1, 0.0).unwrap(), vec![source(10.0, 30.0, s, 1.0)], 0.0);
        let out = render_scene(&spec, &StftConfig::default()).unwrap();
        let p: Vec<f64> = (0..8).map(|c| power(&out.samples().row(c).to_vec())).collect();
        let mean = p.iter().sum::<f64>() / 8.0;
        for v in p {
            assert!((v - mean).abs() <= 0.01 * mean);
        }
    }

    #[test]
    fn equal_sources_give_zero_reference_sir() {
        let geom = circular_array(8, 0.1, 0.0).unwrap();
        let a = speech_shaped_noise(32_000, 16_000.0, 3);
        let b = speech_shaped_noise(32_000, 16_000.0, 4);
        let spec = scene(
            geom,
            vec![source(90.0, 30.0, a, 1.0), source(270.0, 30.0, b, 1.0)],
            0.0,
        );
        let cfg = StftConfig::default();
        let t = render_scene(&spec.subset(|i| i == 0), &cfg).unwrap();
        let i = render_scene(&spec.subset(|i| i == 1), &cfg).unwrap();
        let r = power_ratio_db(
            &t.samples().row(0).to_vec(),
            &i.samples().row(0).to_vec(),
            (0.0, 8000.0),
            16_000.0,
        )
        .unwrap();
        assert!(r.abs() < 0.5, "{r}");
    }

    #[test]
    fn rendering_is_deterministic_and_superposes() {
        let geom = circular_array(4, 0.1, 0.0).unwrap();
        let a = source(20.0, 10.0, speech_shaped_noise(5000, 16_000.0, 5), 0.8);
        let b = source(200.0, 40.0, speech_shaped_noise(4000, 16_000.0, 6), 1.3);
        let cfg = StftConfig::default();

        let noisy = scene(geom.clone(), vec![a.clone(), b.clone()], 0.1);
        let r1 = render_scene(&noisy, &cfg).unwrap();
        let r2 = render_scene(&noisy, &cfg).unwrap();
        assert_eq!(r1, r2);
        let other_seed = SceneSpec { seed: 43, ..noisy.clone() };
        assert_ne!(render_scene(&other_seed, &cfg).unwrap(), r1);

        let both = render_scene(&scene(geom.clone(), vec![a.clone(), b.clone()], 0.0), &cfg).unwrap();
        let ra = render_scene(&scene(geom.clone(), vec![a], 0.0), &cfg).unwrap();
        let mut b_padded = b;
        b_padded.signal.resize(5000, 0.0);
        let rb = render_scene(&scene(geom, vec![b_padded], 0.0), &cfg).unwrap();
        let diff = (both.samples() - &(ra.into_samples() + rb.samples()))
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-9, "{diff}");
    }

    #[test]
    fn scene_validation() {
        let geom = circular_array(4, 0.1, 0.0).unwrap();
        let cfg = StftConfig::default();
        assert!(render_scene(&scene(geom.clone(), vec![], 0.1), &cfg).is_err());
        assert!(render_scene(&scene(geom.clone(), vec![source(0.0, 0.0, vec![1.0; 10], -1.0)], 0.0), &cfg).is_err());
        assert!(render_scene(&scene(geom.clone(), vec![source(0.0, 0.0, vec![1.0; 10], 1.0)], -0.1), &cfg).is_err());
        let wrong_rate = StftConfig::new(512, 256, 48_000.0).unwrap();
        assert!(matches!(
            render_scene(&scene(geom, vec![source(0.0, 0.0, vec![1.0; 10], 1.0)], 0.0), &wrong_rate),
            Err(Error::Mismatch { .. })
        ));
    }

    #[test]
    fn speech_shaped_noise_properties() {
        let x = speech_shaped_noise(16_000, 16_000.0, 9);
        assert!((power(&x) - 1.0).abs() < 1e-12);
        assert_eq!(x, speech_shaped_noise(16_000, 16_000.0, 9));
        let speech = crate::metrics::band_power(&x, (100.0, 4000.0), 16_000.0).unwrap();
        let high = crate::metrics::band_power(&x, (4000.0 + 1.0, 8000.0), 16_000.0).unwrap();
        assert!(speech > 10.0 * high, "{speech} vs {high}");
    }

    fn coarse_bank(geom: &ArrayGeometry) -> BeamformerBank {
        let cfg = DesignConfig {
            angle_step_deg: 5.0,
            ..DesignConfig::default()
        };
        design_bank(geom, &quadrant_sectors(), &cfg, &WaveContext::default()).unwrap()
    }

    #[test]
    fn sir_gain_edge_cases() {
        let geom = circular_array(8, 0.1, 0.0).unwrap();
        let cfg = StftConfig::default();
        let a = speech_shaped_noise(8000, 16_000.0, 10);
        let b = speech_shaped_noise(8000, 16_000.0, 11);

        let silent = scene(
            geom.clone(),
            vec![source(90.0, 35.0, a.clone(), 1.0), source(270.0, 35.0, b.clone(), 0.0)],
            0.0,
        );
        let bank = coarse_bank(&geom);
        assert_eq!(sector_sir_gain(&silent, &bank, 0, &cfg).unwrap(), SIR_CAP_DB);

        let two = scene(
            geom.clone(),
            vec![source(90.0, 35.0, a.clone(), 1.0), source(270.0, 35.0, b.clone(), 1.0)],
            0.0,
        );
        let selector =
            BeamformerBank::selector(geom.clone(), &[0], DesignConfig::default(), WaveContext::default())
                .unwrap();
        let g = sector_sir_gain(&two, &selector, 0, &cfg).unwrap();
        assert!(g.abs() < 1e-9, "{g}");

        let outside = scene(
            geom.clone(),
            vec![source(90.0, 80.0, a.clone(), 1.0), source(270.0, 35.0, b.clone(), 1.0)],
            0.0,
        );
        assert!(matches!(
            sector_sir_gain(&outside, &bank, 0, &cfg),
            Err(Error::OutsideSectors { .. })
        ));
        let single = scene(geom, vec![source(90.0, 35.0, a, 1.0)], 0.0);
        assert!(sector_sir_gain(&single, &bank, 0, &cfg).is_err());
    }

    #[test]
    fn source_sector_output_correlates_best() {
        let geom = circular_array(8, 0.1, 0.0).unwrap();
        let bank = coarse_bank(&geom);
        let cfg = StftConfig::default();
        let s = speech_shaped_noise(16_000, 16_000.0, 12);
        let spec = scene(geom, vec![source(180.0, 35.0, s.clone(), 1.0)], 0.0);
        let out = apply_bank(&render_scene(&spec, &cfg).unwrap(), &bank, &cfg).unwrap();
        let corr = |c: usize| {
            let y = out.samples().row(c);
            let dot: f64 = y.iter().zip(&s).map(|(a, b)| a * b).sum();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ns: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            (dot / (ny * ns)).abs()
        };
        let c: Vec<f64> = (0..4).map(corr).collect();
        for s in [0, 1, 3] {
            assert!(c[2] > c[s], "{c:?}");
        }
    }
}
