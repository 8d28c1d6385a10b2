use std::f64::consts::PI;

use nvlaser::beam::{
    confocal_volume, fit_caustic, fit_knife_edge, m_squared, spot_size, width_at, BeamGeometry, CausticPoint,
    KnifeEdgeScan,
};
use nvlaser::synth::{gen_caustic, gen_knife_edge};
use proptest::prelude::*;

fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn reference_caustic_gives_m_squared_1_19() {
    let geom = BeamGeometry::new(11.9e-6, 700e-6, 0.0, 532e-9).unwrap();
    let z = grid(15, -3.5e-3, 3.5e-3);
    let q = fit_caustic(&gen_caustic(&geom, &z, 0.0, 0).unwrap(), 532e-9).unwrap();
    assert!((q.m_squared - 1.19).abs() < 0.01, "M² = {}", q.m_squared);
}

#[test]
fn ideal_caustic_has_unit_m_squared() {
    let geom = BeamGeometry::ideal(20e-6, 1064e-9, 0.0).unwrap();
    let z = grid(15, -8.0 * geom.rayleigh_range, 8.0 * geom.rayleigh_range);
    let q = fit_caustic(&gen_caustic(&geom, &z, 0.0, 0).unwrap(), 1064e-9).unwrap();
    assert!((q.m_squared - 1.0).abs() < 1e-6);
}

#[test]
fn noisy_caustic_recovers_waist_and_range() {
    let geom = BeamGeometry::new(11.9e-6, 700e-6, 0.0, 532e-9).unwrap();
    let z = grid(15, -3.5e-3, 3.5e-3);
    let (mut waist_hits, mut range_hits, mut range_sq) = (0, 0, 0.0);
    for seed in 0..100 {
        let q = fit_caustic(&gen_caustic(&geom, &z, 0.03, seed).unwrap(), 532e-9).unwrap();
        waist_hits += usize::from(rel(q.geometry.waist_radius, 11.9e-6) < 0.05);
        range_hits += usize::from(rel(q.geometry.rayleigh_range, 700e-6) < 0.05);
        range_sq += rel(q.geometry.rayleigh_range, 700e-6).powi(2) / 100.0;
    }
    assert!(waist_hits >= 95, "waist {waist_hits}/100");
    // zR scatters by about 3% rms at this noise level even with ideal
    // weighting, so 5% is a ~1.7 sigma band and about 90% coverage is the
    // ceiling.
    assert!(range_sq.sqrt() < 0.04, "zR rms error {}", range_sq.sqrt());
    assert!(range_hits >= 80, "Rayleigh range {range_hits}/100");
}

#[test]
fn noisy_knife_edge_width_within_two_percent() {
    let geom = BeamGeometry::ideal(30e-6, 532e-9, 0.0).unwrap();
    let x = grid(40, -75e-6, 75e-6);
    let hits = (0..100)
        .filter(|&seed| {
            let scan = gen_knife_edge(&geom, 0.0, &x, 1e-3, 0.0, 0.01, seed).unwrap();
            rel(fit_knife_edge(&scan).unwrap().width, 30e-6) < 0.02
        })
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn knife_edge_fit_passes_half_power_at_center() {
    let geom = BeamGeometry::ideal(11.9e-6, 532e-9, 0.0).unwrap();
    let x = grid(40, -30e-6, 30e-6);
    let fit = fit_knife_edge(&gen_knife_edge(&geom, 0.0, &x, 2e-3, 3e-6, 0.0, 0).unwrap()).unwrap();
    assert!(rel(fit.predict(fit.center), 1e-3) < 1e-9);
    assert!(rel(fit.width, 11.9e-6) < 1e-6);
}

#[test]
fn m_squared_scales_with_waist_squared() {
    let base = m_squared(11.9e-6, 700e-6, 532e-9).unwrap();
    assert!((base - 1.195).abs() < 5e-4);
    assert!(rel(m_squared(23.8e-6, 700e-6, 532e-9).unwrap(), 4.0 * base) < 1e-12);
}

#[test]
fn doubling_beam_diameter_divides_volume_by_sixteen() {
    let v1 = confocal_volume(1.19, 532e-9, 3e-3, 4e-3).unwrap();
    let v2 = confocal_volume(1.19, 532e-9, 3e-3, 8e-3).unwrap();
    assert!(rel(v1 / v2, 16.0) < 1e-12);
}

#[test]
fn spot_and_volume_for_60x_objective() {
    let spot = spot_size(1.19, 532e-9, 3e-3, 8.05e-3).unwrap();
    assert!((spot - 300e-9).abs() < 40e-9, "spot {spot}");
    let v = confocal_volume(1.19, 532e-9, 3e-3, 8.0e-3).unwrap();
    assert!((v * 1e18 - 5e-3).abs() < 2e-3, "volume {v}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn caustic_round_trip(
        w0 in 2e-6f64..50e-6,
        m2 in 1.0f64..3.0,
        z0 in -1e-3f64..1e-3,
        lambda in 400e-9f64..1100e-9,
    ) {
        let zr = PI * w0 * w0 / (m2 * lambda);
        let geom = BeamGeometry::new(w0, zr, z0, lambda).unwrap();
        let z = grid(15, z0 - 4.0 * zr, z0 + 4.0 * zr);
        let points: Vec<CausticPoint> = z.iter().map(|&z| CausticPoint::new(z, width_at(&geom, z))).collect();
        let q = fit_caustic(&points, lambda).unwrap();
        prop_assert!(rel(q.geometry.waist_radius, w0) < 1e-6);
        prop_assert!(rel(q.geometry.rayleigh_range, zr) < 1e-6);
        prop_assert!((q.geometry.focus_position - z0).abs() < 1e-6 * zr);
    }

    #[test]
    fn width_even_and_increasing(
        w0 in 1e-6f64..1e-4,
        zr in 1e-4f64..1e-2,
        z0 in -1e-2f64..1e-2,
        d1 in 0.0f64..5e-2,
        d2 in 0.0f64..5e-2,
    ) {
        let geom = BeamGeometry::new(w0, zr, z0, 532e-9).unwrap();
        prop_assert!(rel(width_at(&geom, z0 + d1), width_at(&geom, z0 - d1)) < 1e-12);
        let (near, far) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        if far - near > 1e-9 * zr {
            prop_assert!(width_at(&geom, z0 + far) > width_at(&geom, z0 + near));
        }
    }

    #[test]
    fn ideal_beam_is_unit_m_squared(w0 in 1e-6f64..1e-3, lambda in 300e-9f64..2e-6) {
        let zr = PI * w0 * w0 / lambda;
        prop_assert!((m_squared(w0, zr, lambda).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn volume_over_spot_cubed_is_constant(
        m2a in 1.0f64..3.0, m2b in 1.0f64..3.0,
        la in 400e-9f64..1100e-9, lb in 400e-9f64..1100e-9,
    ) {
        let (f, d) = (3e-3, 8e-3);
        let ratio = |m2: f64, l: f64| confocal_volume(m2, l, f, d).unwrap() / spot_size(m2, l, f, d).unwrap().powi(3);
        prop_assert!(rel(ratio(m2a, la), ratio(m2b, lb)) < 1e-10);
    }

    #[test]
    fn blade_reversal_keeps_width(seed in 0u64..10_000, center in -5e-6f64..5e-6) {
        let geom = BeamGeometry::ideal(11.9e-6, 532e-9, 0.0).unwrap();
        let x = grid(40, -30e-6, 30e-6);
        let scan = gen_knife_edge(&geom, 0.0, &x, 1e-3, center, 0.01, seed).unwrap();
        let mirrored = KnifeEdgeScan::new(0.0, scan.samples.iter().map(|&(x, p)| (-x, p)).collect()).unwrap();
        let a = fit_knife_edge(&scan).unwrap();
        let b = fit_knife_edge(&mirrored).unwrap();
        prop_assert!(rel(a.width, b.width) < 1e-6, "{} vs {}", a.width, b.width);
        prop_assert_eq!(a.direction, -b.direction);
    }
}
