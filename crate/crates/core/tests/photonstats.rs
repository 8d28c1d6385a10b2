use nvlaser::photonstats::{correlate, emitter_count, g2_zero, TimestampSeries};
use nvlaser::synth::{gen_photon_stream, gen_poisson_stream};
use proptest::prelude::*;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn single_emitter_dips_and_recovers() {
    let (a, b) = gen_photon_stream(1, 0.1, 0.1, 4e6, 1).unwrap();
    let h = correlate(&a, &b, 150.2, 0.4).unwrap();
    assert!(h.g2[h.center_index()] < 0.1);
    let wings: Vec<f64> = h.bin_centers.iter().zip(&h.g2).filter(|(t, _)| t.abs() > 100.0).map(|(_, g)| *g).collect();
    assert!((mean(&wings) - 1.0).abs() < 0.03);
    assert!(g2_zero(&h, 3).unwrap() < 0.15);
}

#[test]
fn superposition_of_two_emitters() {
    let (a1, b1) = gen_photon_stream(1, 0.1, 0.1, 4e6, 10).unwrap();
    let (a2, b2) = gen_photon_stream(1, 0.1, 0.1, 4e6, 11).unwrap();
    let h = correlate(&a1.merge(&a2), &b1.merge(&b2), 150.2, 0.4).unwrap();
    let g = g2_zero(&h, 1).unwrap();
    assert!((g - 0.5).abs() < 0.05, "g2(0) = {g}");
    let n = emitter_count(g).unwrap();
    assert!((n.n_emitters - 2.0).abs() < 0.5);
    assert!(!n.is_single);
}

#[test]
fn independent_poisson_streams_are_flat() {
    let a = gen_poisson_stream(0, 0.01, 1e7, 5).unwrap();
    let b = gen_poisson_stream(1, 0.01, 1e7, 6).unwrap();
    assert!(a.len() >= 90_000 && b.len() >= 90_000);
    let h = correlate(&a, &b, 150.2, 0.4).unwrap();
    assert!((mean(&h.g2) - 1.0).abs() < 0.02, "mean g2 {}", mean(&h.g2));
}

#[test]
fn composition_tracks_one_minus_one_over_k() {
    for k in [3usize, 4] {
        let streams: Vec<_> = (0..k).map(|i| gen_photon_stream(1, 0.1, 0.1, 4e6, 100 + i as u64).unwrap()).collect();
        let (mut a, mut b) = streams[0].clone();
        for (ai, bi) in &streams[1..] {
            a = a.merge(ai);
            b = b.merge(bi);
        }
        let h = correlate(&a, &b, 150.2, 0.4).unwrap();
        let g = g2_zero(&h, 1).unwrap();
        let expected = 1.0 - 1.0 / k as f64;
        let sigma = expected / (h.normalization_factor * expected).sqrt();
        assert!((g - expected).abs() < 3.0 * sigma, "k={k}: g2(0) = {g}, sigma {sigma}");
    }
}

/// Arrival times on a 1/64 ns lattice so that shifting is exact in floating point.
fn lattice_stream(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0u32..64 * 2000, 1..len).prop_map(|ticks| {
        let mut t: Vec<f64> = ticks.into_iter().map(|k| k as f64 / 64.0).collect();
        t.sort_by(f64::total_cmp);
        t
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swapping_channels_mirrors_histogram(ta in lattice_stream(300), tb in lattice_stream(300)) {
        let a = TimestampSeries::new(0, ta, (0.0, 2000.0)).unwrap();
        let b = TimestampSeries::new(1, tb, (0.0, 2000.0)).unwrap();
        let ab = correlate(&a, &b, 50.2, 0.4).unwrap();
        let ba = correlate(&b, &a, 50.2, 0.4).unwrap();
        let mut mirrored = ba.raw_counts.clone();
        mirrored.reverse();
        prop_assert_eq!(ab.raw_counts, mirrored);
    }

    #[test]
    fn common_shift_keeps_counts(ta in lattice_stream(300), tb in lattice_stream(300), shift in 0u32..64 * 500) {
        let offset = shift as f64 / 64.0;
        let a = TimestampSeries::new(0, ta, (0.0, 2000.0)).unwrap();
        let b = TimestampSeries::new(1, tb, (0.0, 2000.0)).unwrap();
        let base = correlate(&a, &b, 50.2, 0.4).unwrap();
        let moved = correlate(&a.shifted(offset), &b.shifted(offset), 50.2, 0.4).unwrap();
        prop_assert_eq!(base.raw_counts, moved.raw_counts);
    }
}
