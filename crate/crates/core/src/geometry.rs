//! Array geometry, look directions, angular sectors and far-field steering
//! vectors.
//!
//! Angles are degrees at the API boundary. Azimuth is measured in the array
//! plane from the +x axis towards +y, elevation upward from that plane.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::{Error, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_SAMPLE_RATE: f64 = 16_000.0;
pub const DEFAULT_RADIUS_M: f64 = 0.1;

/// `(sin, cos)` of an angle in degrees.
///
/// The angle is reduced to the nearest multiple of 90° first, so that angles
/// differing by a quarter turn give exactly rotated results. Grid and array
/// symmetry tests rely on that.
pub fn sincos_deg(deg: f64) -> (f64, f64) {
    let quarter = (deg / 90.0).round();
    let (s, c) = (deg - 90.0 * quarter).to_radians().sin_cos();
    match (quarter as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

fn normalize_azimuth(deg: f64) -> f64 {
    let az = deg.rem_euclid(360.0);
    // rem_euclid of tiny negatives rounds up to 360
    if az >= 360.0 {
        0.0
    } else {
        az
    }
}

/// Microphone positions in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    name: String,
    mics: Vec<[f64; 3]>,
}

impl ArrayGeometry {
    pub fn new(name: impl Into<String>, mics: Vec<[f64; 3]>) -> Result<Self> {
        if mics.is_empty() {
            return Err(Error::Geometry("at least one microphone is required".into()));
        }
        if let Some(i) = mics.iter().position(|m| m.iter().any(|c| !c.is_finite())) {
            return Err(Error::Geometry(format!(
                "microphone {i} has a non-finite coordinate"
            )));
        }
        Ok(Self {
            name: name.into(),
            mics,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mics(&self) -> &[[f64; 3]] {
        &self.mics
    }

    /// Channel count `I`.
    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }

    /// Copy of the geometry with every microphone shifted by `offset`.
    pub fn translated(&self, offset: [f64; 3]) -> Self {
        let mics = self
            .mics
            .iter()
            .map(|m| [m[0] + offset[0], m[1] + offset[1], m[2] + offset[2]])
            .collect();
        Self {
            name: self.name.clone(),
            mics,
        }
    }
}

/// Uniform circular array in the z = 0 plane. Microphone `j` sits at azimuth
/// `first_mic_azimuth_deg + j * 360 / num_mics`.
pub fn circular_array(
    num_mics: usize,
    radius_m: f64,
    first_mic_azimuth_deg: f64,
) -> Result<ArrayGeometry> {
    if num_mics == 0 {
        return Err(Error::Geometry("num_mics must be at least 1".into()));
    }
    if !(radius_m > 0.0 && radius_m.is_finite()) {
        return Err(Error::Geometry(format!(
            "radius_m must be positive, got {radius_m}"
        )));
    }
    if !first_mic_azimuth_deg.is_finite() {
        return Err(Error::Geometry("first_mic_azimuth_deg must be finite".into()));
    }
    let mics = (0..num_mics)
        .map(|j| {
            let az = first_mic_azimuth_deg + j as f64 * 360.0 / num_mics as f64;
            let (s, c) = sincos_deg(az);
            [radius_m * c, radius_m * s, 0.0]
        })
        .collect();
    ArrayGeometry::new(format!("circular{num_mics}_r{radius_m}"), mics)
}

/// A look direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    azimuth_deg: f64,
    elevation_deg: f64,
}

impl Direction {
    /// Azimuth is wrapped into [0, 360); elevation outside [-90, 90] is
    /// rejected.
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        if !azimuth_deg.is_finite() || !elevation_deg.is_finite() {
            return Err(Error::Direction("angles must be finite".into()));
        }
        if !(-90.0..=90.0).contains(&elevation_deg) {
            return Err(Error::Direction(format!(
                "elevation {elevation_deg} outside [-90, 90]"
            )));
        }
        Ok(Self {
            azimuth_deg: normalize_azimuth(azimuth_deg),
            elevation_deg,
        })
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_deg
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation_deg
    }

    /// Unit propagation vector `[cos az cos el, sin az cos el, sin el]`.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (sa, ca) = sincos_deg(self.azimuth_deg);
        let (se, ce) = sincos_deg(self.elevation_deg);
        [ca * ce, sa * ce, se]
    }
}

/// Free-function form of [`Direction::unit_vector`].
pub fn unit_vector(dir: Direction) -> [f64; 3] {
    dir.unit_vector()
}

/// Region of directions covered by one beam.
///
/// Azimuth is the half-open interval `[start, end)`, walked counter-clockwise
/// from `start` and allowed to wrap through 0° (e.g. 315 → 45). Elevation is
/// the closed interval `[min, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularSector {
    label: String,
    azimuth_start_deg: f64,
    azimuth_span_deg: f64,
    elevation_min_deg: f64,
    elevation_max_deg: f64,
}

impl AngularSector {
    pub fn new(
        label: impl Into<String>,
        azimuth_start_deg: f64,
        azimuth_end_deg: f64,
        elevation_min_deg: f64,
        elevation_max_deg: f64,
    ) -> Result<Self> {
        let label = label.into();
        let vals = [
            azimuth_start_deg,
            azimuth_end_deg,
            elevation_min_deg,
            elevation_max_deg,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sector(format!("{label}: angles must be finite")));
        }
        for (name, el) in [
            ("elevation_min_deg", elevation_min_deg),
            ("elevation_max_deg", elevation_max_deg),
        ] {
            if !(-90.0..=90.0).contains(&el) {
                return Err(Error::Sector(format!(
                    "{label}: {name} {el} outside [-90, 90]"
                )));
            }
        }
        if elevation_min_deg >= elevation_max_deg {
            return Err(Error::Sector(format!(
                "{label}: elevation_min_deg {elevation_min_deg} must be below elevation_max_deg {elevation_max_deg}"
            )));
        }
        let start = normalize_azimuth(azimuth_start_deg);
        let mut span = (azimuth_end_deg - azimuth_start_deg).rem_euclid(360.0);
        if span == 0.0 && azimuth_end_deg != azimuth_start_deg {
            span = 360.0;
        }
        if span == 0.0 {
            return Err(Error::Sector(format!("{label}: empty azimuth interval")));
        }
        Ok(Self {
            label,
            azimuth_start_deg: start,
            azimuth_span_deg: span,
            elevation_min_deg,
            elevation_max_deg,
        })
    }

    /// The whole sphere as a single sector.
    pub fn full_sphere() -> Self {
        Self::new("full", 0.0, 360.0, -90.0, 90.0).expect("valid full-sphere sector")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn azimuth_start_deg(&self) -> f64 {
        self.azimuth_start_deg
    }

    pub fn azimuth_end_deg(&self) -> f64 {
        let end = self.azimuth_start_deg + self.azimuth_span_deg;
        if end > 360.0 {
            end - 360.0
        } else {
            end
        }
    }

    pub fn azimuth_span_deg(&self) -> f64 {
        self.azimuth_span_deg
    }

    pub fn elevation_min_deg(&self) -> f64 {
        self.elevation_min_deg
    }

    pub fn elevation_max_deg(&self) -> f64 {
        self.elevation_max_deg
    }

    pub fn contains_azimuth(&self, azimuth_deg: f64) -> bool {
        (azimuth_deg - self.azimuth_start_deg).rem_euclid(360.0) < self.azimuth_span_deg
    }

    pub fn contains(&self, dir: &Direction) -> bool {
        dir.elevation_deg >= self.elevation_min_deg
            && dir.elevation_deg <= self.elevation_max_deg
            && self.contains_azimuth(dir.azimuth_deg)
    }

    /// Direction at the azimuth midpoint and elevation midpoint.
    pub fn center(&self) -> Direction {
        Direction::new(
            self.azimuth_start_deg + self.azimuth_span_deg / 2.0,
            (self.elevation_min_deg + self.elevation_max_deg) / 2.0,
        )
        .expect("sector center is a valid direction")
    }
}

/// The four-sector tabletop layout: quarter-circle azimuth sectors centered
/// on 0°, 90°, 180° and 270°, all spanning 10° to 60° elevation.
pub fn quadrant_sectors() -> Vec<AngularSector> {
    [(315.0, 45.0), (45.0, 135.0), (135.0, 225.0), (225.0, 315.0)]
        .iter()
        .enumerate()
        .map(|(i, &(start, end))| {
            AngularSector::new(format!("sector{}", i + 1), start, end, 10.0, 60.0)
                .expect("preset sectors are valid")
        })
        .collect()
}

/// Index of the first sector containing `dir`.
pub fn sector_of(sectors: &[AngularSector], dir: &Direction) -> Option<usize> {
    sectors.iter().position(|s| s.contains(dir))
}

/// Sampling rate and propagation speed shared by design and simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveContext {
    sample_rate_hz: f64,
    speed_of_sound_mps: f64,
}

impl WaveContext {
    pub fn new(sample_rate_hz: f64, speed_of_sound_mps: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::Config(format!(
                "sample_rate_hz must be positive, got {sample_rate_hz}"
            )));
        }
        if !(speed_of_sound_mps > 0.0 && speed_of_sound_mps.is_finite()) {
            return Err(Error::Config(format!(
                "speed_of_sound must be positive, got {speed_of_sound_mps}"
            )));
        }
        Ok(Self {
            sample_rate_hz,
            speed_of_sound_mps,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn speed_of_sound_mps(&self) -> f64 {
        self.speed_of_sound_mps
    }

    pub fn wavelength(&self, freq_hz: f64) -> f64 {
        self.speed_of_sound_mps / freq_hz
    }
}

impl Default for WaveContext {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            speed_of_sound_mps: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

/// Per-microphone propagation lead `kᵀm / c` in seconds.
pub fn relative_delays(geom: &ArrayGeometry, dir: &Direction, ctx: &WaveContext) -> Vec<f64> {
    let k = dir.unit_vector();
    geom.mics
        .iter()
        .map(|m| (k[0] * m[0] + k[1] * m[1] + k[2] * m[2]) / ctx.speed_of_sound_mps)
        .collect()
}

/// Steering vector for frequency `freq_hz` given precomputed delays.
pub fn steering_from_delays(delays: &[f64], freq_hz: f64) -> Vec<Complex64> {
    delays
        .iter()
        .map(|tau| Complex64::cis(-2.0 * PI * freq_hz * tau))
        .collect()
}

/// Far-field steering vector, entry `i` = `exp(-2jπ kᵀm_i / λ)` with
/// `λ = c / f`. Negative frequencies give the complex conjugate; at 0 Hz the
/// vector is all ones.
pub fn steering_vector(
    geom: &ArrayGeometry,
    dir: &Direction,
    freq_hz: f64,
    ctx: &WaveContext,
) -> Vec<Complex64> {
    steering_from_delays(&relative_delays(geom, dir, ctx), freq_hz)
}
