use super::*;
use crate::geometry::{circular_array, quadrant_sectors, steering_vector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn origin() -> ArrayGeometry {
    ArrayGeometry::new("origin", vec![[0.0; 3]]).unwrap()
}

fn grid(step: f64) -> QuadratureGrid {
    build_grid(step, WeightingMode::ElevationCosine).unwrap()
}

/// Dense least-squares oracle for `min Σ ω |wᴴd − b|² + δ‖w‖²`, solved by SVD
/// on the stacked rows `√ω dᵀ` (unknown `conj(w)`).
fn brute_force_weights(
    geom: &ArrayGeometry,
    grid: &QuadratureGrid,
    sector: &AngularSector,
    freq: f64,
    ridge: f64,
) -> Vec<Complex64> {
    let ctx = WaveContext::default();
    let n = geom.num_mics();
    let extra = if ridge > 0.0 { n } else { 0 };
    let rows = grid.len() + extra;
    let mut a = DMatrix::<Complex64>::zeros(rows, n);
    let mut y = DVector::<Complex64>::zeros(rows);
    for (r, node) in grid.nodes().iter().enumerate() {
        let sw = node.weight.sqrt();
        let d = steering_vector(geom, &node.direction, freq, &ctx);
        for i in 0..n {
            a[(r, i)] = d[i] * sw;
        }
        if sector.contains(&node.direction) {
            y[r] = c(sw);
        }
    }
    for i in 0..extra {
        a[(grid.len() + i, i)] = c(ridge.sqrt());
    }
    let v = a.svd(true, true).solve(&y, 1e-300).unwrap();
    v.iter().map(|x| x.conj()).collect()
}

fn objective(
    geom: &ArrayGeometry,
    grid: &QuadratureGrid,
    sector: &AngularSector,
    freq: f64,
    w: &[Complex64],
) -> f64 {
    let ctx = WaveContext::default();
    grid.nodes()
        .iter()
        .map(|node| {
            let d = steering_vector(geom, &node.direction, freq, &ctx);
            let r: Complex64 = w.iter().zip(&d).map(|(w, d)| w.conj() * d).sum();
            let b = if sector.contains(&node.direction) { 1.0 } else { 0.0 };
            node.weight * (r - b).norm_sqr()
        })
        .sum()
}

fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn single_mic_gram_is_total_weight() {
    let g = grid(5.0);
    let ctx = WaveContext::default();
    for f in [0.0, 1000.0, 7999.0] {
        let gm = gram_matrix(&origin(), &g, f, &ctx);
        assert!((gm[[0, 0]].re - g.total_weight()).abs() < 1e-12);
    }
    assert!((g.total_weight() - 4.0 * PI).abs() < 0.01);
}

#[test]
fn dc_gram_is_rank_one() {
    let g = grid(10.0);
    let ctx = WaveContext::default();
    let geom = circular_array(4, 0.1, 0.0).unwrap();
    let gm = gram_matrix(&geom, &g, 0.0, &ctx);
    let total = g.total_weight();
    for v in gm.iter() {
        assert!((v - c(total)).norm() < 1e-12);
    }
}

#[test]
fn gram_diagonal_hermitian_psd() {
    let g = grid(5.0);
    let ctx = WaveContext::default();
    let geom = circular_array(8, 0.1, 0.0).unwrap();
    let total = g.total_weight();
    for f in [125.0, 500.0, 2000.0, 4000.0, 8000.0] {
        let gm = gram_matrix(&geom, &g, f, &ctx);
        let n = geom.num_mics();
        let mut trace = 0.0;
        for a in 0..n {
            assert!((gm[[a, a]].re - total).abs() < 1e-10);
            trace += gm[[a, a]].re;
            for b in 0..n {
                assert!((gm[[a, b]] - gm[[b, a]].conj()).norm() < 1e-10);
            }
        }
        let m = DMatrix::from_fn(n, n, |a, b| gm[[a, b]]);
        let min_eig = m.symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-9 * trace, "f {f}: min eig {min_eig}");
    }
}

#[test]
fn target_moment_examples() {
    let g = grid(1.0);
    let ctx = WaveContext::default();
    let sectors = quadrant_sectors();

    // no cell center falls inside [10.6, 10.9] elevation
    let thin = AngularSector::new("thin", 45.0, 135.0, 10.6, 10.9).unwrap();
    let geom = circular_array(4, 0.1, 0.0).unwrap();
    let m = target_moment(&geom, &g, &SectorTarget::new(thin), 1000.0, &ctx);
    assert!(m.iter().all(|v| *v == c(0.0)));

    // ∫cos φ dφ over [10°, 60°] times a quarter turn
    let analytic = (60f64.to_radians().sin() - 10f64.to_radians().sin()) * PI / 2.0;
    assert!((analytic - 1.0876).abs() < 1e-4);
    let m = target_moment(&origin(), &g, &SectorTarget::new(sectors[1].clone()), 500.0, &ctx);
    assert!((m[0].re - analytic).abs() < 1e-4, "{}", m[0].re);
    assert_eq!(m[0].im, 0.0);

    let full = SectorTarget::new(AngularSector::full_sphere());
    let g10 = grid(10.0);
    let m = target_moment(&geom, &g10, &full, 0.0, &ctx);
    let gm = gram_matrix(&geom, &g10, 0.0, &ctx);
    for a in 0..4 {
        let row: Complex64 = (0..4).map(|b| gm[[a, b]]).sum::<Complex64>() / 4.0;
        assert!((m[a] - row).norm() < 1e-12);
    }
}

#[test]
fn scalar_solve_example() {
    let g = grid(1.0);
    let ctx = WaveContext::default();
    let gm = gram_matrix(&origin(), &g, 1000.0, &ctx);
    let m = target_moment(
        &origin(),
        &g,
        &SectorTarget::new(quadrant_sectors()[1].clone()),
        1000.0,
        &ctx,
    );
    let w = solve_sector_weights(gm.view(), &m, 0.0).unwrap();
    let want = 1.0876 / (4.0 * PI);
    assert!((w[0].re - want).abs() < 1e-4, "{}", w[0].re);
    let w = solve_sector_weights(gm.view(), &m, 0.5).unwrap();
    assert!((w[0].re - m[0].re / (gm[[0, 0]].re * 1.5)).abs() < 1e-15);
}

#[test]
fn loaded_dc_solve_matches_regularized_least_squares() {
    let g = grid(10.0);
    let ctx = WaveContext::default();
    let geom = circular_array(4, 0.1, 0.0).unwrap();
    let sector = quadrant_sectors()[1].clone();
    let gm = gram_matrix(&geom, &g, 0.0, &ctx);
    let m = target_moment(&geom, &g, &SectorTarget::new(sector.clone()), 0.0, &ctx);
    let loading = 1e-6;
    let w = solve_sector_weights(gm.view(), &m, loading).unwrap();
    assert!(w.iter().all(|v| v.re.is_finite() && v.im.is_finite()));
    let ridge = loading * g.total_weight();
    let oracle = brute_force_weights(&geom, &g, &sector, 0.0, ridge);
    let scale = oracle.iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(max_abs_diff(&w, &oracle) <= 1e-6 * scale.max(1.0));
}

#[test]
fn closed_form_matches_brute_force_least_squares() {
    let g = grid(10.0);
    let ctx = WaveContext::default();
    let geom = circular_array(8, 0.1, 0.0).unwrap();
    for (s, sector) in quadrant_sectors().iter().enumerate() {
        for f in [1000.0, 2000.0, 3500.0] {
            let gm = gram_matrix(&geom, &g, f, &ctx);
            let m = target_moment(&geom, &g, &SectorTarget::new(sector.clone()), f, &ctx);
            let w = solve_sector_weights(gm.view(), &m, 0.0).unwrap();
            let oracle = brute_force_weights(&geom, &g, sector, f, 0.0);
            let diff = max_abs_diff(&w, &oracle);
            assert!(diff <= 1e-6, "sector {s} f {f}: {diff}");
        }
    }
}

#[test]
fn objective_is_minimized() {
    let g = grid(10.0);
    let ctx = WaveContext::default();
    let geom = circular_array(8, 0.1, 0.0).unwrap();
    let sector = quadrant_sectors()[1].clone();
    let f = 2000.0;
    let gm = gram_matrix(&geom, &g, f, &ctx);
    let m = target_moment(&geom, &g, &SectorTarget::new(sector.clone()), f, &ctx);
    let w = solve_sector_weights(gm.view(), &m, 0.0).unwrap();
    let best = objective(&geom, &g, &sector, f, &w);
    let zero = objective(&geom, &g, &sector, f, &[c(0.0); 8]);
    assert!(best <= zero);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let eps: f64 = rng.random_range(1e-4..1e-1);
        let p: Vec<Complex64> = w
            .iter()
            .map(|v| v + Complex64::new(rng.random_range(-eps..eps), rng.random_range(-eps..eps)))
            .collect();
        assert!(best <= objective(&geom, &g, &sector, f, &p));
    }
}

fn coarse_config(step: f64, loading: f64) -> DesignConfig {
    DesignConfig {
        angle_step_deg: step,
        diagonal_loading: loading,
        ..DesignConfig::default()
    }
}

#[test]
fn single_mic_full_sphere_bank() {
    let ctx = WaveContext::default();
    for loading in [0.0, 1e-6, 0.25] {
        let cfg = coarse_config(10.0, loading);
        let bank = design_bank(&origin(), &[AngularSector::full_sphere()], &cfg, &ctx).unwrap();
        for w in bank.weights().iter() {
            assert!((w - c(1.0 / (1.0 + loading))).norm() < 1e-12);
        }
    }
    let bank = design_bank(
        &origin(),
        &[AngularSector::full_sphere()],
        &coarse_config(10.0, 0.0),
        &ctx,
    )
    .unwrap();
    let d = Direction::new(33.0, -12.0).unwrap();
    for bin in [0, 100, 256] {
        let r = beam_response(&bank, 0, &d, bin).unwrap();
        assert!((r - c(1.0)).norm() < 1e-12);
    }
}

#[test]
fn bank_shape_and_dc_response() {
    let ctx = WaveContext::default();
    let geom = circular_array(4, 0.1, 0.0).unwrap();
    let bank = design_bank(&geom, &quadrant_sectors(), &coarse_config(10.0, 1e-6), &ctx).unwrap();
    assert_eq!(bank.weights().dim(), (257, 4, 4));
    assert!(bank.weights().iter().all(|w| w.re.is_finite() && w.im.is_finite()));
    for s in 0..4 {
        let r = beam_response(&bank, s, &Direction::new(200.0, 20.0).unwrap(), 0).unwrap();
        assert!(r.im.abs() <= 1e-12 * r.norm().max(1e-300));
    }
    assert!(matches!(
        beam_response(&bank, 4, &Direction::new(0.0, 0.0).unwrap(), 0),
        Err(Error::IndexOutOfRange { .. })
    ));
    assert!(beam_response(&bank, 0, &Direction::new(0.0, 0.0).unwrap(), 257).is_err());
}

#[test]
fn sector_weights_rotate_with_channels() {
    let ctx = WaveContext::default();
    for n in [4usize, 8] {
        let geom = circular_array(n, 0.1, 0.0).unwrap();
        let bank = design_bank(&geom, &quadrant_sectors(), &coarse_config(10.0, 1e-6), &ctx).unwrap();
        let shift = n / 4;
        for bin in 0..bank.n_bins() {
            for s in 0..4 {
                let a = bank.sector_weights(s, bin).unwrap();
                let b = bank.sector_weights((s + 1) % 4, bin).unwrap();
                for i in 0..n {
                    let diff = (b[(i + shift) % n] - a[i]).norm();
                    assert!(diff <= 1e-8, "I={n} bin {bin} s {s}: {diff}");
                }
            }
        }
    }
}

#[test]
fn thread_count_does_not_change_weights() {
    let ctx = WaveContext::default();
    let geom = circular_array(8, 0.1, 0.0).unwrap();
    let cfg = coarse_config(10.0, 1e-6);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| design_bank(&geom, &quadrant_sectors(), &cfg, &ctx).unwrap())
    };
    assert_eq!(run(1).to_bytes(), run(4).to_bytes());
}

#[test]
fn verbatim_weighting_gram_is_indefinite() {
    let ctx = WaveContext::default();
    let geom = circular_array(4, 0.1, 0.0).unwrap();
    let g = build_grid(10.0, WeightingMode::VerbatimAzimuthCosine).unwrap();
    let gm = gram_matrix(&geom, &g, 2000.0, &ctx);
    let m = DMatrix::from_fn(4, 4, |a, b| gm[[a, b]]);
    assert!(m.symmetric_eigenvalues().min() < 0.0);

    let cfg = DesignConfig {
        weighting_mode: WeightingMode::VerbatimAzimuthCosine,
        ..coarse_config(10.0, 1e-6)
    };
    match design_bank(&geom, &quadrant_sectors(), &cfg, &ctx) {
        Err(e @ Error::BinSolve { .. }) => assert!(e.is_numerical()),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("verbatim design of a 4-mic array should hit a singular bin"),
    }
}

#[test]
fn config_validation() {
    let ctx = WaveContext::default();
    let geom = circular_array(4, 0.1, 0.0).unwrap();
    for cfg in [
        DesignConfig { n_fft: 500, ..DesignConfig::default() },
        DesignConfig { n_fft: 32, ..DesignConfig::default() },
        DesignConfig { diagonal_loading: -1.0, ..DesignConfig::default() },
        DesignConfig { angle_step_deg: 7.0, ..DesignConfig::default() },
    ] {
        assert!(matches!(
            design_bank(&geom, &quadrant_sectors(), &cfg, &ctx),
            Err(Error::Config(_))
        ));
    }
    assert!(design_bank(&geom, &[], &coarse_config(10.0, 0.0), &ctx).is_err());
    let other_rate = WaveContext::new(48_000.0, 343.0).unwrap();
    assert!(design_bank(&geom, &quadrant_sectors(), &coarse_config(10.0, 0.0), &other_rate).is_err());
}

#[test]
fn bank_bytes_round_trip() {
    let ctx = WaveContext::default();
    let geom = circular_array(4, 0.1, 0.0).unwrap();
    let bank = design_bank(&geom, &quadrant_sectors(), &coarse_config(30.0, 1e-6), &ctx).unwrap();
    let bytes = bank.to_bytes();
    assert_eq!(&bytes[..7], b"SBBANK1");
    assert_eq!(u32::from_le_bytes(bytes[7..11].try_into().unwrap()), 512);
    assert_eq!(BeamformerBank::from_bytes(&bytes).unwrap(), bank);

    assert!(matches!(
        BeamformerBank::from_bytes(&bytes[..bytes.len() - 3]),
        Err(Error::BankFormat(_))
    ));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(BeamformerBank::from_bytes(&bad).is_err());
    assert!(BeamformerBank::from_bytes(&[]).is_err());

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bank.csv");
    write_bank_csv(&bank, &csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin,freq_hz,sector,channel,real,imag"));
    assert_eq!(lines.count(), 257 * 4 * 4);
}

#[test]
fn selector_bank() {
    let ctx = WaveContext::default();
    let geom = circular_array(3, 0.1, 0.0).unwrap();
    let bank = BeamformerBank::selector(geom.clone(), &[2, 0], DesignConfig::default(), ctx).unwrap();
    assert_eq!(bank.weights().dim(), (257, 3, 2));
    assert_eq!(bank.sector_weights(0, 5).unwrap(), vec![c(0.0), c(0.0), c(1.0)]);
    assert!(BeamformerBank::selector(geom, &[3], DesignConfig::default(), ctx).is_err());
}
