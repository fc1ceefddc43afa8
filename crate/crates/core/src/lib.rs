//! Data-independent angular-sector beamforming.
//!
//! Fixed per-frequency spatial filters are designed from the array geometry
//! alone by a weighted least-squares fit of the beam response to a sector
//! indicator over the whole sphere. The resulting [`BeamformerBank`] is applied
//! to multichannel audio in the STFT domain, producing one output channel per
//! angular sector.
//!
//! Module map:
//! - [`geometry`]: arrays, directions, sectors, steering vectors
//! - [`designer`]: quadrature grid, Gram matrix, closed-form weights, bank I/O
//! - [`stft`]: sqrt-Hann analysis/synthesis with perfect reconstruction
//! - [`pipeline`]: bank application, beam-pattern maps, WAV I/O
//! - [`scene`]: far-field plane-wave scene simulation and SIR gain
//! - [`metrics`]: speaker-count confusion scores, band-limited power ratios

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod designer;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod stft;

pub use designer::{
    BeamformerBank, DesignConfig, QuadratureGrid, SectorTarget, WeightingMode,
};
pub use error::{Error, Result};
pub use geometry::{AngularSector, ArrayGeometry, Direction, WaveContext};
pub use metrics::CountConfusion;
pub use pipeline::{MultichannelAudio, PatternMap};
pub use scene::{SceneSource, SceneSpec};
pub use stft::{SpectrogramTensor, StftConfig};

pub use num_complex::Complex64;
