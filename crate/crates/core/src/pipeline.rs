//! Applying a bank to audio, beam-pattern maps, and WAV I/O.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::designer::BeamformerBank;
use crate::geometry::{relative_delays, steering_from_delays, AngularSector, Direction};
use crate::stft::{stft_forward, stft_inverse, SpectrogramTensor, StftConfig};
use crate::{Error, Result};

/// Added to magnitudes before taking dB; floors the map at -240 dB.
pub const DB_EPSILON: f64 = 1e-12;

/// Real multichannel signal, `channels × samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelAudio {
    samples: Array2<f64>,
    sample_rate_hz: f64,
}

impl MultichannelAudio {
    pub fn new(samples: Array2<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.nrows() == 0 {
            return Err(Error::Empty("audio needs at least one channel".into()));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("audio contains non-finite samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }
}

/// Filters the spectrogram with every sector's weights: output `s` at bin
/// `f`, frame `t` is `ŵ_sᴴ(f) x(f, t)`.
pub fn apply_bank_spectrum(
    spec: &SpectrogramTensor,
    bank: &BeamformerBank,
) -> Result<SpectrogramTensor> {
    let (channels, bins, frames) = spec.data.dim();
    if channels != bank.num_mics() {
        return Err(Error::Mismatch {
            what: "channel count",
            expected: bank.num_mics().to_string(),
            found: channels.to_string(),
        });
    }
    if bins != bank.n_bins() {
        return Err(Error::Mismatch {
            what: "bin count",
            expected: bank.n_bins().to_string(),
            found: bins.to_string(),
        });
    }
    let weights = bank.weights();
    let sectors: Vec<Array2<Complex64>> = (0..bank.num_sectors())
        .into_par_iter()
        .map(|s| {
            let mut out = Array2::zeros((bins, frames));
            for f in 0..bins {
                let w: Vec<Complex64> = (0..channels).map(|i| weights[[f, i, s]].conj()).collect();
                for t in 0..frames {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (i, wi) in w.iter().enumerate() {
                        acc += wi * spec.data[[i, f, t]];
                    }
                    out[[f, t]] = acc;
                }
            }
            out
        })
        .collect();
    let mut data = Array3::zeros((sectors.len(), bins, frames));
    for (s, m) in sectors.into_iter().enumerate() {
        data.index_axis_mut(Axis(0), s).assign(&m);
    }
    Ok(SpectrogramTensor {
        data,
        config: spec.config,
        signal_len: spec.signal_len,
    })
}

/// Runs the full analysis → filter → synthesis chain. The output has one
/// channel per sector, in sector order, and the input length.
pub fn apply_bank(
    audio: &MultichannelAudio,
    bank: &BeamformerBank,
    cfg: &StftConfig,
) -> Result<MultichannelAudio> {
    if audio.channels() != bank.num_mics() {
        return Err(Error::Mismatch {
            what: "channel count",
            expected: bank.num_mics().to_string(),
            found: audio.channels().to_string(),
        });
    }
    let rate = bank.config().sample_rate_hz;
    if audio.sample_rate_hz() != rate || cfg.sample_rate_hz != rate {
        return Err(Error::Mismatch {
            what: "sample rate",
            expected: rate.to_string(),
            found: audio.sample_rate_hz().to_string(),
        });
    }
    if cfg.n_fft != bank.config().n_fft {
        return Err(Error::Mismatch {
            what: "n_fft",
            expected: bank.config().n_fft.to_string(),
            found: cfg.n_fft.to_string(),
        });
    }
    if audio.is_empty() {
        return Err(Error::Empty("audio has no samples".into()));
    }
    let spec = stft_forward(audio.samples().view(), cfg)?;
    let out = apply_bank_spectrum(&spec, bank)?;
    MultichannelAudio::new(stft_inverse(&out)?, rate)
}

/// Beam-pattern magnitudes in dB over `elevation × azimuth × bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternMap {
    pub magnitudes_db: Array3<f64>,
    pub elevations_deg: Vec<f64>,
    pub azimuth_step_deg: f64,
    pub freq_axis_hz: Vec<f64>,
}

fn azimuth_points(step_deg: f64) -> Result<usize> {
    let n = (360.0 / step_deg).round();
    if !(step_deg > 0.0) || n < 1.0 || (n * step_deg - 360.0).abs() > 1e-9 * 360.0 {
        return Err(Error::Config(format!(
            "azimuth step {step_deg} does not divide 360 degrees"
        )));
    }
    Ok(n as usize)
}

/// Evaluates `20 log10(|ŵ_sᴴ d| + 1e-12)` for one sector at every listed
/// elevation, every azimuth on a `azimuth_step_deg` grid starting at 0°,
/// and every bin.
pub fn export_pattern(
    bank: &BeamformerBank,
    sector_index: usize,
    elevations_deg: &[f64],
    azimuth_step_deg: f64,
) -> Result<PatternMap> {
    if sector_index >= bank.num_sectors() {
        return Err(Error::IndexOutOfRange {
            what: "sector",
            index: sector_index,
            count: bank.num_sectors(),
        });
    }
    if elevations_deg.is_empty() {
        return Err(Error::Empty("no elevations requested".into()));
    }
    let n_az = azimuth_points(azimuth_step_deg)?;
    let dirs: Vec<Vec<Direction>> = elevations_deg
        .iter()
        .map(|&el| {
            (0..n_az)
                .map(|j| Direction::new(j as f64 * azimuth_step_deg, el))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let n_bins = bank.n_bins();
    let freqs: Vec<f64> = (0..n_bins).map(|b| bank.bin_frequency(b)).collect();
    let weights = bank.weights();
    let ctx = *bank.wave_context();

    let slices: Vec<Array2<f64>> = dirs
        .par_iter()
        .map(|ring| {
            let mut out = Array2::zeros((n_az, n_bins));
            for (j, dir) in ring.iter().enumerate() {
                let tau = relative_delays(bank.geometry(), dir, &ctx);
                for (b, &f) in freqs.iter().enumerate() {
                    let d = steering_from_delays(&tau, f);
                    let r: Complex64 = d
                        .iter()
                        .enumerate()
                        .map(|(i, di)| weights[[b, i, sector_index]].conj() * di)
                        .sum();
                    out[[j, b]] = 20.0 * (r.norm() + DB_EPSILON).log10();
                }
            }
            out
        })
        .collect();

    let mut magnitudes_db = Array3::zeros((elevations_deg.len(), n_az, n_bins));
    for (e, m) in slices.into_iter().enumerate() {
        magnitudes_db.index_axis_mut(Axis(0), e).assign(&m);
    }
    Ok(PatternMap {
        magnitudes_db,
        elevations_deg: elevations_deg.to_vec(),
        azimuth_step_deg,
        freq_axis_hz: freqs,
    })
}

pub const PATTERN_CSV_HEADER: &str = "elevation_deg,azimuth_deg,freq_hz,magnitude_db";

impl PatternMap {
    pub fn n_azimuth(&self) -> usize {
        self.magnitudes_db.dim().1
    }

    pub fn azimuth_deg(&self, j: usize) -> f64 {
        j as f64 * self.azimuth_step_deg
    }

    /// Mean dB over grid points inside `sector` minus the mean over the
    /// points outside, at one bin. `None` if either side is empty.
    pub fn dominance_margin_db(&self, sector: &AngularSector, bin: usize) -> Option<f64> {
        let (mut sum_in, mut n_in, mut sum_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
        for (e, &el) in self.elevations_deg.iter().enumerate() {
            for j in 0..self.n_azimuth() {
                let v = self.magnitudes_db[[e, j, bin]];
                let dir = Direction::new(self.azimuth_deg(j), el).ok()?;
                if sector.contains(&dir) {
                    sum_in += v;
                    n_in += 1;
                } else {
                    sum_out += v;
                    n_out += 1;
                }
            }
        }
        if n_in == 0 || n_out == 0 {
            return None;
        }
        Some(sum_in / n_in as f64 - sum_out / n_out as f64)
    }

    /// One row per grid point; azimuth varies fastest, then frequency, then
    /// elevation.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{PATTERN_CSV_HEADER}")?;
        for (e, el) in self.elevations_deg.iter().enumerate() {
            for (b, f) in self.freq_axis_hz.iter().enumerate() {
                for j in 0..self.n_azimuth() {
                    writeln!(
                        w,
                        "{el},{},{f},{}",
                        self.azimuth_deg(j),
                        self.magnitudes_db[[e, j, b]]
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Reads a map written by [`PatternMap::write_csv`].
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut lines = reader.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == PATTERN_CSV_HEADER => {}
            _ => return Err(Error::Shape("pattern CSV header missing".into())),
        }
        let mut rows: Vec<[f64; 4]> = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Shape(format!("line {}: {e}", i + 2)))?;
            let row: [f64; 4] = vals
                .try_into()
                .map_err(|_| Error::Shape(format!("line {}: expected 4 fields", i + 2)))?;
            rows.push(row);
        }
        let first = rows.first().ok_or_else(|| Error::Empty("pattern CSV has no rows".into()))?;
        let n_az = rows.iter().take_while(|r| r[2] == first[2] && r[0] == first[0]).count();
        let n_bins = rows
            .iter()
            .step_by(n_az)
            .take_while(|r| r[0] == first[0])
            .count();
        let n_el = rows.len() / (n_az * n_bins);
        if n_az < 2 || n_el * n_az * n_bins != rows.len() {
            return Err(Error::Shape("pattern CSV is not a full grid".into()));
        }
        let azimuth_step_deg = rows[1][1] - rows[0][1];
        let freq_axis_hz = (0..n_bins).map(|b| rows[b * n_az][2]).collect();
        let elevations_deg = (0..n_el).map(|e| rows[e * n_az * n_bins][0]).collect();
        let mut magnitudes_db = Array3::zeros((n_el, n_az, n_bins));
        for e in 0..n_el {
            for b in 0..n_bins {
                for j in 0..n_az {
                    magnitudes_db[[e, j, b]] = rows[(e * n_bins + b) * n_az + j][3];
                }
            }
        }
        Ok(Self {
            magnitudes_db,
            elevations_deg,
            azimuth_step_deg,
            freq_axis_hz,
        })
    }
}

/// Reads PCM (any bit depth up to 32) or IEEE float WAV into `[-1, 1]`
/// floats.
pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelAudio> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
    };
    let frames = interleaved.len() / channels.max(1);
    let samples = Array2::from_shape_fn((channels, frames), |(c, t)| interleaved[t * channels + c]);
    MultichannelAudio::new(samples, spec.sample_rate as f64)
}

fn write_wav_with(
    path: &Path,
    audio: ArrayView2<f64>,
    sample_rate_hz: f64,
    spec: hound::WavSpec,
    mut put: impl FnMut(&mut hound::WavWriter<BufWriter<std::fs::File>>, f64) -> hound::Result<()>,
) -> Result<()> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    if sample_rate_hz.fract() != 0.0 || sample_rate_hz > u32::MAX as f64 {
        return Err(Error::Config(format!(
            "WAV needs an integer sample rate, got {sample_rate_hz}"
        )));
    }
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for t in 0..audio.ncols() {
        for c in 0..audio.nrows() {
            put(&mut writer, audio[[c, t]]).map_err(wav_err)?;
        }
    }
    writer.finalize().map_err(wav_err)
}

/// Writes 32-bit IEEE float WAV.
pub fn write_wav_f32(path: impl AsRef<Path>, audio: &MultichannelAudio) -> Result<()> {
    let spec = hound::WavSpec {
        channels: audio.channels() as u16,
        sample_rate: audio.sample_rate_hz() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    write_wav_with(
        path.as_ref(),
        audio.samples().view(),
        audio.sample_rate_hz(),
        spec,
        |w, v| w.write_sample(v as f32),
    )
}

/// Writes 16-bit PCM WAV, clipping to `[-1, 1)`.
pub fn write_wav_pcm16(path: impl AsRef<Path>, audio: &MultichannelAudio) -> Result<()> {
    let spec = hound::WavSpec {
        channels: audio.channels() as u16,
        sample_rate: audio.sample_rate_hz() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    write_wav_with(
        path.as_ref(),
        audio.samples().view(),
        audio.sample_rate_hz(),
        spec,
        |w, v| w.write_sample((v * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
    )
}
