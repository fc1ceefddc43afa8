//! Shared fixtures for the criterion benches.

use ndarray::Array2;
use sectorbeam::designer::design_bank;
use sectorbeam::geometry::{circular_array, quadrant_sectors};
use sectorbeam::{BeamformerBank, DesignConfig, MultichannelAudio, WaveContext};

/// Four-quadrant sector bank for a circular array of radius 0.1 m.
pub fn quadrant_bank(num_mics: usize, angle_step_deg: f64) -> BeamformerBank {
    let geom = circular_array(num_mics, 0.1, 0.0).expect("valid array");
    let cfg = DesignConfig {
        angle_step_deg,
        ..DesignConfig::default()
    };
    design_bank(&geom, &quadrant_sectors(), &cfg, &WaveContext::default()).expect("design succeeds")
}

/// Deterministic multichannel test signal at 16 kHz.
pub fn chirp_audio(channels: usize, seconds: f64) -> MultichannelAudio {
    let fs = 16_000.0;
    let len = (seconds * fs) as usize;
    let x = Array2::from_shape_fn((channels, len), |(c, n)| {
        let t = n as f64 / fs;
        (2.0 * std::f64::consts::PI * (200.0 + 400.0 * t + 50.0 * c as f64) * t).sin()
    });
    MultichannelAudio::new(x, fs).expect("valid audio")
}
