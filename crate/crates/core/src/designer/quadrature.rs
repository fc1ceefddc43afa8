use crate::geometry::{sincos_deg, AngularSector, Direction};
use crate::{Error, Result};

/// Angular density used as the integration weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightingMode {
    /// `cos(elevation)`: the solid-angle element on the sphere.
    ElevationCosine,
    /// `cos(azimuth)`, the weight as literally printed in the design
    /// objective. Negative over half the circle; kept for reproduction only.
    VerbatimAzimuthCosine,
}

impl WeightingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightingMode::ElevationCosine => "elevation_cosine",
            WeightingMode::VerbatimAzimuthCosine => "verbatim_azimuth_cosine",
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            WeightingMode::ElevationCosine => 0,
            WeightingMode::VerbatimAzimuthCosine => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(WeightingMode::ElevationCosine),
            1 => Some(WeightingMode::VerbatimAzimuthCosine),
            _ => None,
        }
    }
}

impl std::str::FromStr for WeightingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elevation_cosine" => Ok(WeightingMode::ElevationCosine),
            "verbatim_azimuth_cosine" => Ok(WeightingMode::VerbatimAzimuthCosine),
            other => Err(Error::Config(format!(
                "unknown weighting_mode {other:?} (expected elevation_cosine or verbatim_azimuth_cosine)"
            ))),
        }
    }
}

impl std::fmt::Display for WeightingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridNode {
    pub direction: Direction,
    pub weight: f64,
}

/// Midpoint-rule grid over the full sphere.
///
/// Nodes sit at cell centers, ordered by elevation ring (south to north) and
/// by ascending azimuth within a ring.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    nodes: Vec<GridNode>,
    azimuth_step_deg: f64,
    elevation_step_deg: f64,
    n_azimuth: usize,
    n_elevation: usize,
    mode: WeightingMode,
}

pub(crate) fn check_step(step_deg: f64) -> Result<()> {
    cells(step_deg, 360.0)?;
    cells(step_deg, 180.0)?;
    Ok(())
}

fn cells(step_deg: f64, span: f64) -> Result<usize> {
    if !(step_deg > 0.0 && step_deg.is_finite()) {
        return Err(Error::Config(format!(
            "angle step must be positive, got {step_deg}"
        )));
    }
    let n = (span / step_deg).round();
    if n < 1.0 || (n * step_deg - span).abs() > 1e-9 * span {
        return Err(Error::Config(format!(
            "angle step {step_deg} does not divide {span} degrees exactly"
        )));
    }
    Ok(n as usize)
}

/// Builds the full-sphere grid with `step_deg` cells in both angles. Node
/// weight is the density (`cos φ` or `cos θ`, see [`WeightingMode`]) times
/// the cell area `step²` in square radians.
pub fn build_grid(step_deg: f64, mode: WeightingMode) -> Result<QuadratureGrid> {
    let n_azimuth = cells(step_deg, 360.0)?;
    let n_elevation = cells(step_deg, 180.0)?;
    let cell = step_deg.to_radians().powi(2);
    let mut nodes = Vec::with_capacity(n_azimuth * n_elevation);
    for i in 0..n_elevation {
        let el = -90.0 + (i as f64 + 0.5) * step_deg;
        let (_, cos_el) = sincos_deg(el);
        for j in 0..n_azimuth {
            let az = (j as f64 + 0.5) * step_deg;
            let density = match mode {
                WeightingMode::ElevationCosine => cos_el,
                WeightingMode::VerbatimAzimuthCosine => sincos_deg(az).1,
            };
            nodes.push(GridNode {
                direction: Direction::new(az, el)?,
                weight: density * cell,
            });
        }
    }
    Ok(QuadratureGrid {
        nodes,
        azimuth_step_deg: step_deg,
        elevation_step_deg: step_deg,
        n_azimuth,
        n_elevation,
        mode,
    })
}

impl QuadratureGrid {
    pub fn nodes(&self) -> &[GridNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn azimuth_step_deg(&self) -> f64 {
        self.azimuth_step_deg
    }

    pub fn elevation_step_deg(&self) -> f64 {
        self.elevation_step_deg
    }

    pub fn mode(&self) -> WeightingMode {
        self.mode
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// Node index ranges, one per elevation ring.
    pub(crate) fn rings(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.n_elevation).map(move |i| i * self.n_azimuth..(i + 1) * self.n_azimuth)
    }

    /// For each node, the indices of the sectors containing it.
    pub fn membership(&self, sectors: &[AngularSector]) -> Vec<Vec<usize>> {
        self.nodes
            .iter()
            .map(|n| {
                sectors
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.contains(&n.direction))
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect()
    }
}
