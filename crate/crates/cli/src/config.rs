//! TOML configuration files for `design` and `simulate`.
//!
//! Every section is validated while it is deserialized (`try_from`), so a bad
//! value is reported by the TOML parser together with its line, column and
//! the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sectorbeam::designer::{DEFAULT_ANGLE_STEP_DEG, DEFAULT_LOADING, DEFAULT_N_FFT};
use sectorbeam::geometry::{
    circular_array, quadrant_sectors, DEFAULT_RADIUS_M, DEFAULT_SAMPLE_RATE, DEFAULT_SPEED_OF_SOUND,
};
use sectorbeam::{AngularSector, ArrayGeometry, DesignConfig, StftConfig, WaveContext, WeightingMode};

use crate::Failure;

/// Elevation in degrees, restricted to [-90, 90].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Elevation(f64);

impl TryFrom<f64> for Elevation {
    type Error = String;
    fn try_from(v: f64) -> Result<Self, String> {
        if (-90.0..=90.0).contains(&v) {
            Ok(Self(v))
        } else {
            Err(format!("elevation {v}° is outside [-90, 90]"))
        }
    }
}

impl From<Elevation> for f64 {
    fn from(e: Elevation) -> f64 {
        e.0
    }
}

/// Finite azimuth in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Azimuth(f64);

impl TryFrom<f64> for Azimuth {
    type Error = String;
    fn try_from(v: f64) -> Result<Self, String> {
        if v.is_finite() {
            Ok(Self(v))
        } else {
            Err(format!("azimuth must be finite, got {v}"))
        }
    }
}

impl From<Azimuth> for f64 {
    fn from(a: Azimuth) -> f64 {
        a.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RawGeometry {
    Circular(CircularSpec),
    Explicit(ExplicitSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircularSpec {
    num_mics: usize,
    #[serde(default = "default_radius")]
    radius_m: f64,
    #[serde(default)]
    first_mic_azimuth_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplicitSpec {
    #[serde(default = "default_explicit_name")]
    name: String,
    mics: Vec<[f64; 3]>,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS_M
}

fn default_explicit_name() -> String {
    "explicit".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct GeometrySection {
    raw: RawGeometry,
    geometry: ArrayGeometry,
}

impl TryFrom<RawGeometry> for GeometrySection {
    type Error = String;
    fn try_from(raw: RawGeometry) -> Result<Self, String> {
        let geometry = match &raw {
            RawGeometry::Circular(c) => {
                circular_array(c.num_mics, c.radius_m, c.first_mic_azimuth_deg)
            }
            RawGeometry::Explicit(e) => ArrayGeometry::new(e.name.clone(), e.mics.clone()),
        }
        .map_err(|e| e.to_string())?;
        Ok(Self { raw, geometry })
    }
}

impl From<GeometrySection> for RawGeometry {
    fn from(g: GeometrySection) -> Self {
        g.raw
    }
}

impl GeometrySection {
    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SectorEntry {
    label: String,
    azimuth_start_deg: Azimuth,
    azimuth_end_deg: Azimuth,
    elevation_min_deg: Elevation,
    elevation_max_deg: Elevation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSectors {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    list: Option<Vec<SectorEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSectors", into = "RawSectors")]
pub struct SectorsSection {
    raw: RawSectors,
    sectors: Vec<AngularSector>,
}

impl TryFrom<RawSectors> for SectorsSection {
    type Error = String;
    fn try_from(raw: RawSectors) -> Result<Self, String> {
        let sectors = match (&raw.preset, &raw.list) {
            (Some(p), None) if p == "paper4" => quadrant_sectors(),
            (Some(p), None) => return Err(format!("unknown sector preset `{p}` (expected `paper4`)")),
            (None, Some(list)) if !list.is_empty() => list
                .iter()
                .map(|s| {
                    AngularSector::new(
                        s.label.clone(),
                        s.azimuth_start_deg.into(),
                        s.azimuth_end_deg.into(),
                        s.elevation_min_deg.into(),
                        s.elevation_max_deg.into(),
                    )
                    .map_err(|e| format!("sector `{}`: {e}", s.label))
                })
                .collect::<Result<_, _>>()?,
            (None, Some(_)) => return Err("sector list is empty".into()),
            (Some(_), Some(_)) => return Err("give either `preset` or `list`, not both".into()),
            (None, None) => return Err("missing `preset` or `list`".into()),
        };
        Ok(Self { raw, sectors })
    }
}

impl From<SectorsSection> for RawSectors {
    fn from(s: SectorsSection) -> Self {
        s.raw
    }
}

impl SectorsSection {
    pub fn sectors(&self) -> &[AngularSector] {
        &self.sectors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    #[serde(default = "default_n_fft")]
    n_fft: usize,
    #[serde(default = "default_sample_rate")]
    sample_rate_hz: f64,
    #[serde(default = "default_step")]
    angle_step_deg: f64,
    #[serde(default = "default_loading")]
    diagonal_loading: f64,
    #[serde(default = "default_mode")]
    weighting_mode: String,
    #[serde(default = "default_speed")]
    speed_of_sound: f64,
}

fn default_n_fft() -> usize {
    DEFAULT_N_FFT
}
fn default_sample_rate() -> f64 {
    DEFAULT_SAMPLE_RATE
}
fn default_step() -> f64 {
    DEFAULT_ANGLE_STEP_DEG
}
fn default_loading() -> f64 {
    DEFAULT_LOADING
}
fn default_mode() -> String {
    WeightingMode::ElevationCosine.as_str().into()
}
fn default_speed() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl Default for RawDesign {
    fn default() -> Self {
        Self {
            n_fft: default_n_fft(),
            sample_rate_hz: default_sample_rate(),
            angle_step_deg: default_step(),
            diagonal_loading: default_loading(),
            weighting_mode: default_mode(),
            speed_of_sound: default_speed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDesign", into = "RawDesign")]
pub struct DesignSection {
    raw: RawDesign,
    config: DesignConfig,
    ctx: WaveContext,
}

impl TryFrom<RawDesign> for DesignSection {
    type Error = String;
    fn try_from(raw: RawDesign) -> Result<Self, String> {
        let weighting_mode: WeightingMode = raw.weighting_mode.parse().map_err(|e| format!("{e}"))?;
        let config = DesignConfig {
            n_fft: raw.n_fft,
            sample_rate_hz: raw.sample_rate_hz,
            diagonal_loading: raw.diagonal_loading,
            angle_step_deg: raw.angle_step_deg,
            weighting_mode,
        };
        config.validate().map_err(|e| e.to_string())?;
        let ctx = WaveContext::new(raw.sample_rate_hz, raw.speed_of_sound).map_err(|e| e.to_string())?;
        Ok(Self { raw, config, ctx })
    }
}

impl From<DesignSection> for RawDesign {
    fn from(d: DesignSection) -> Self {
        d.raw
    }
}

impl Default for DesignSection {
    fn default() -> Self {
        RawDesign::default().try_into().expect("defaults are valid")
    }
}

impl DesignSection {
    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    pub fn wave_context(&self) -> &WaveContext {
        &self.ctx
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftSection {
    /// Defaults to n_fft / 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hop: Option<usize>,
}

/// Contents of a `design` configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    pub geometry: GeometrySection,
    pub sectors: SectorsSection,
    #[serde(default)]
    pub design: DesignSection,
    #[serde(default)]
    pub stft: StftSection,
}

impl ToolConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.stft_config()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = read_text(path)?;
        Self::parse(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }

    pub fn stft_config(&self) -> Result<StftConfig, String> {
        let d = self.design.config();
        let hop = self.stft.hop.unwrap_or(d.n_fft / 2);
        StftConfig::new(d.n_fft, hop, d.sample_rate_hz).map_err(|e| format!("[stft] {e}"))
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    SpeechShaped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub azimuth_deg: Azimuth,
    pub elevation_deg: Elevation,
    #[serde(default = "unit_gain")]
    pub gain: f64,
    /// Mono WAV file; mutually exclusive with `signal`.
    #[serde(default)]
    pub wav: Option<PathBuf>,
    #[serde(default)]
    pub signal: Option<SignalKind>,
    /// Seed of a generated signal; defaults to the source index.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn unit_gain() -> f64 {
    1.0
}

/// Contents of a `simulate` scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Length of generated signals.
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub seed: u64,
    /// Index of the target source within `source`.
    #[serde(default)]
    pub target: usize,
    /// STFT hop; defaults to n_fft / 2 of the bank.
    #[serde(default)]
    pub hop: Option<usize>,
    #[serde(default)]
    pub source: Vec<SourceEntry>,
}

fn default_duration() -> f64 {
    10.0
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        if cfg.source.is_empty() {
            return Err("scene has no [[source]] entries".into());
        }
        if cfg.target >= cfg.source.len() {
            return Err(format!(
                "target {} out of range for {} sources",
                cfg.target,
                cfg.source.len()
            ));
        }
        if !(cfg.duration_s > 0.0 && cfg.duration_s.is_finite()) {
            return Err(format!("duration_s must be positive, got {}", cfg.duration_s));
        }
        for (i, s) in cfg.source.iter().enumerate() {
            if s.wav.is_some() == s.signal.is_some() {
                return Err(format!("source {i}: give exactly one of `wav` or `signal`"));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = read_text(path)?;
        Self::parse(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }
}
