mod common;

use cantor_core::spectral::{
    abscissa_estimate, box_dimension_estimate, commutator_norm, measure, measure_by_extrapolation,
    moran_root, random_choice, witness_choice, zeta, WeightClasses,
};
use cantor_core::tree::{build_ifs_tree, build_uniform_tree};
use cantor_core::ultrametric::{distance, BoundaryPath};
use cantor_core::GeneratorTag;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ratios() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..0.45, 2..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn truncated_zeta_increases_to_the_geometric_sum(r in ratios(), ds in 0.05f64..1.0) {
        let s0 = moran_root(&r).unwrap();
        let s = s0 + ds;
        let g: f64 = r.iter().map(|x| x.powf(s)).sum();
        let exact = 1.0 / (1.0 - g);
        let mut prev = 0.0;
        for depth in 1..=6 {
            let t = build_ifs_tree(&r, depth).unwrap();
            // raw truncated sum, no tail
            let raw: f64 = t.weights().iter().map(|w| w.powf(s)).sum();
            prop_assert!(raw > prev);
            prev = raw;
            prop_assert!((zeta(&t, s).unwrap().value - exact).abs() < 1e-10 * exact);
        }
        prop_assert!(zeta(&build_ifs_tree(&r, 3).unwrap(), s0 - 0.01).is_err());
    }

    #[test]
    fn zeta_decreases_in_s(r in ratios()) {
        let t = build_ifs_tree(&r, 5).unwrap();
        let s0 = moran_root(&r).unwrap();
        let vals: Vec<f64> = (1..10).map(|k| zeta(&t, s0 + 0.1 * k as f64).unwrap().value).collect();
        prop_assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn estimators_match_moran_on_lattice_ratios(rho in 0.1f64..0.6, k in prop::collection::vec(1i32..4, 2..=4)) {
        let r: Vec<f64> = k.iter().map(|&e| rho.powi(e)).collect();
        let s0 = moran_root(&r).unwrap();
        let classes = WeightClasses::generated(&GeneratorTag::Ifs { ratios: r }, 1.0, 30).unwrap();
        prop_assert!((abscissa_estimate(&classes).unwrap() - s0).abs() < 1e-2);
        prop_assert!((box_dimension_estimate(&classes).unwrap() - s0).abs() < 1e-2);
    }

    #[test]
    fn closed_form_measure_is_additive(r in ratios(), depth in 1u32..7) {
        let t = build_ifs_tree(&r, depth).unwrap();
        let mu = measure(&t).unwrap();
        prop_assert!((mu.get(t.root()) - 1.0).abs() < 1e-15);
        prop_assert!(mu.additivity_drift(&t) <= 1e-15);
        prop_assert!(mu.values.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn connes_bound_for_distance_functions(seed in any::<u64>(), depth in 2u32..7) {
        let t = build_ifs_tree(&[0.4, 0.3, 0.2], depth).unwrap();
        let mu = measure(&t).unwrap();
        let tau = random_choice(&t, &mu, seed).unwrap();
        for (v, p) in tau.pairs.iter().enumerate() {
            if let Some((a, b)) = p {
                prop_assert_eq!(distance(&t, a, b), t.weight(v as u32));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = mu.sample_point(&t, &mut rng);
        prop_assert!(commutator_norm(&t, |p| distance(&t, &x, p), &tau) <= 1.0 + 1e-12);
    }
}

// Ratio sets whose logs are nearly commensurate show count staircases at depth
// 30 and converge slowly, so the non-lattice check uses fixed sets.
#[test]
fn estimators_match_moran_on_non_lattice_sets() {
    for r in [
        vec![0.2, 0.3],
        vec![0.1, 0.4],
        vec![0.4, 0.3, 0.2],
        vec![0.05, 0.45],
        vec![0.05, 0.0578],
    ] {
        let s0 = moran_root(&r).unwrap();
        let classes =
            WeightClasses::generated(&GeneratorTag::Ifs { ratios: r.clone() }, 1.0, 30).unwrap();
        assert!(
            (abscissa_estimate(&classes).unwrap() - s0).abs() < 1e-2,
            "{r:?}"
        );
        assert!(
            (box_dimension_estimate(&classes).unwrap() - s0).abs() < 1e-2,
            "{r:?}"
        );
    }
}

#[test]
fn extrapolated_measure_matches_closed_form() {
    let r = [0.5, 0.25];
    let t = build_ifs_tree(&r, 8).unwrap();
    let s0 = moran_root(&r).unwrap();
    let exact = measure(&t).unwrap();
    let approx = measure_by_extrapolation(&t, s0).unwrap();
    for v in 0..t.len() {
        assert!(
            (exact.values[v] - approx.values[v]).abs() < 1e-6,
            "vertex {v}"
        );
    }
    assert!(approx.extrapolation.unwrap().reliable);
    // Moran equation at the root of the bisection
    assert!((exact.get(1) + exact.get(2) - 1.0).abs() < 1e-14);
}

#[test]
fn witness_choice_attains_the_distance() {
    let t = build_uniform_tree(2, 1.0 / 3.0, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let w1: Vec<usize> = (0..8).map(|_| rng.random_range(0..2)).collect();
        let mut w2: Vec<usize> = (0..8).map(|_| rng.random_range(0..2)).collect();
        w2[rng.random_range(0..8)] ^= 1;
        if w1 == w2 {
            continue;
        }
        let x = BoundaryPath::from_word(&t, &w1).unwrap();
        let y = BoundaryPath::from_word(&t, &w2).unwrap();
        let tau = witness_choice(&t, &x, &y).unwrap();
        let norm = commutator_norm(&t, |p| distance(&t, &x, p), &tau);
        assert_eq!(norm, 1.0);
        assert_eq!(
            (distance(&t, &x, &x) - distance(&t, &x, &y)).abs(),
            distance(&t, &x, &y)
        );
    }
}

#[test]
fn random_choice_is_seeded() {
    let t = build_uniform_tree(2, 1.0 / 3.0, 6).unwrap();
    let mu = measure(&t).unwrap();
    assert_eq!(
        random_choice(&t, &mu, 9).unwrap(),
        random_choice(&t, &mu, 9).unwrap()
    );
    // both orders of the child pair occur about equally often
    let mut first = 0;
    for seed in 0..400 {
        let tau = random_choice(&t, &mu, seed).unwrap();
        let (a, _) = tau.pairs[0].as_ref().unwrap();
        first += (a.word(&t)[0] == 0) as u32;
    }
    assert!((first as f64 - 200.0).abs() < 4.0 * 10.0, "{first}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn extrapolated_measure_is_additive(seed in any::<u64>(), depth in 3u32..6) {
        let t = common::random_level_tree(seed, depth);
        let mu = measure(&t).unwrap();
        prop_assert!((mu.get(t.root()) - 1.0).abs() < 1e-12);
        prop_assert!(mu.additivity_drift(&t) <= 1e-10, "drift {}", mu.additivity_drift(&t));
        prop_assert!(mu.values.iter().all(|&m| m > 0.0));
    }
}
