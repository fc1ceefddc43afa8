//! Bank file format.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! magic            7 bytes  "SBBANK1"
//! n_fft            u32
//! sample_rate_hz   f64
//! num_mics (I)     u32
//! num_sectors (S)  u32
//! loading          f64
//! weighting_mode   u8       0 = elevation_cosine, 1 = verbatim_azimuth_cosine
//! angle_step_deg   f64
//! speed_of_sound   f64
//! geometry name    u16 length + UTF-8
//! mics             I × (x, y, z) f64
//! sectors          S × (az_start, az_end, el_min, el_max) f64 + u16 length + UTF-8 label
//! weights          n_bins × I × S × (re, im) f64, bin-major, then channel, then sector
//! ```

use ndarray::Array3;
use num_complex::Complex64;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{BeamformerBank, DesignConfig, WeightingMode};
use crate::geometry::{AngularSector, ArrayGeometry, WaveContext};
use crate::{Error, Result};

pub const MAGIC: &[u8; 7] = b"SBBANK1";

impl BeamformerBank {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.config();
        let mut out = Vec::with_capacity(128 + self.weights().len() * 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(cfg.n_fft as u32).to_le_bytes());
        out.extend_from_slice(&cfg.sample_rate_hz.to_le_bytes());
        out.extend_from_slice(&(self.num_mics() as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_sectors() as u32).to_le_bytes());
        out.extend_from_slice(&cfg.diagonal_loading.to_le_bytes());
        out.push(cfg.weighting_mode.code());
        out.extend_from_slice(&cfg.angle_step_deg.to_le_bytes());
        out.extend_from_slice(&self.wave_context().speed_of_sound_mps().to_le_bytes());
        put_str(&mut out, self.geometry().name());
        for m in self.geometry().mics() {
            for c in m {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        for s in self.sectors() {
            for v in [
                s.azimuth_start_deg(),
                s.azimuth_end_deg(),
                s.elevation_min_deg(),
                s.elevation_max_deg(),
            ] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            put_str(&mut out, s.label());
        }
        // standard layout of (bin, channel, sector) is exactly the file order
        for w in self.weights().iter() {
            out.extend_from_slice(&w.re.to_le_bytes());
            out.extend_from_slice(&w.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::BankFormat("bad magic, not a bank file".into()));
        }
        let n_fft = r.u32()? as usize;
        let sample_rate_hz = r.f64()?;
        let n_mics = r.u32()? as usize;
        let n_sectors = r.u32()? as usize;
        let diagonal_loading = r.f64()?;
        let mode = r.u8()?;
        let weighting_mode = WeightingMode::from_code(mode)
            .ok_or_else(|| Error::BankFormat(format!("unknown weighting mode {mode}")))?;
        let angle_step_deg = r.f64()?;
        let speed = r.f64()?;
        let name = r.string()?;
        let config = DesignConfig {
            n_fft,
            sample_rate_hz,
            diagonal_loading,
            angle_step_deg,
            weighting_mode,
        };
        config
            .validate()
            .map_err(|e| Error::BankFormat(format!("header: {e}")))?;

        let mut mics = Vec::with_capacity(n_mics.min(1 << 16));
        for _ in 0..n_mics {
            mics.push([r.f64()?, r.f64()?, r.f64()?]);
        }
        let geometry = ArrayGeometry::new(name, mics)?;
        let mut sectors = Vec::with_capacity(n_sectors.min(1 << 16));
        for _ in 0..n_sectors {
            let (a0, a1, e0, e1) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let label = r.string()?;
            sectors.push(AngularSector::new(label, a0, a1, e0, e1)?);
        }
        let n = config.n_bins() * n_mics * n_sectors;
        if r.remaining() != n * 16 {
            return Err(Error::BankFormat(format!(
                "expected {} weight bytes, found {}",
                n * 16,
                r.remaining()
            )));
        }
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            values.push(Complex64::new(r.f64()?, r.f64()?));
        }
        let weights = Array3::from_shape_vec((config.n_bins(), n_mics, n_sectors), values)
            .map_err(|e| Error::BankFormat(e.to_string()))?;
        let ctx = WaveContext::new(sample_rate_hz, speed)?;
        BeamformerBank::from_parts(weights, geometry, sectors, config, ctx)
    }
}

pub fn write_bank(bank: &BeamformerBank, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, bank.to_bytes())?;
    Ok(())
}

pub fn read_bank(path: impl AsRef<Path>) -> Result<BeamformerBank> {
    BeamformerBank::from_bytes(&std::fs::read(path)?)
}

/// Human-readable export: `bin,freq_hz,sector,channel,real,imag`.
pub fn write_bank_csv(bank: &BeamformerBank, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "bin,freq_hz,sector,channel,real,imag")?;
    for ((bin, ch, s), v) in bank.weights().indexed_iter() {
        writeln!(
            w,
            "{bin},{},{s},{ch},{},{}",
            bank.bin_frequency(bin),
            v.re,
            v.im
        )?;
    }
    w.flush()?;
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    let bytes = &s.as_bytes()[..s.len().min(u16::MAX as usize)];
    out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::BankFormat(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::BankFormat("label is not valid UTF-8".into()))
    }
}
