use cantor_core::diffusion::{
    compose_level_laws, heat_coefficients, heat_series, linear_regime_constant, msd_analytic,
    msd_monte_carlo, sample_increment, sample_stationary, simulate_trajectory, triadic_tree,
    vladimirov_direct, vladimirov_quotient, HeatSeries, LocallyConstant,
};
use cantor_core::laplacian::{assemble, haar_function, haar_words, triadic_eigenvalue, triadic_s0};
use cantor_core::spectral::measure;
use cantor_core::ultrametric::{lcp, BoundaryPath};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DEPTH: u32 = 12;

/// Height of the longest common prefix of two depth-12 words given as integers.
fn level(a: usize, b: usize) -> usize {
    if a == b {
        DEPTH as usize
    } else {
        (a ^ b).leading_zeros() as usize - (usize::BITS - DEPTH) as usize
    }
}

/// One step on depth-12 cylinders: the mass of `p_n` spread evenly over the
/// `2^{12−n−1}` cylinders of the level-`n` sphere; levels ≥ 12 stay put.
fn cylinder_step(series: &HeatSeries, from: &[f64]) -> Vec<f64> {
    let cells = 1usize << DEPTH;
    let stay: f64 = 1.0
        - (0..DEPTH as usize)
            .map(|n| series.level_prob(n))
            .sum::<f64>();
    let mut out = vec![0.0; cells];
    for (a, &pa) in from.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (b, o) in out.iter_mut().enumerate() {
            let n = level(a, b);
            *o += pa
                * if n == DEPTH as usize {
                    stay
                } else {
                    series.level_prob(n) / (1usize << (DEPTH as usize - n - 1)) as f64
                };
        }
    }
    out
}

fn log_time() -> impl Strategy<Value = f64> {
    (-8.0f64..2.0).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #[test]
    fn level_law_is_normalized_and_positive(t in log_time(), k in 0usize..3) {
        let s = triadic_s0() - 1.0 + k as f64;
        let h = heat_coefficients(t, s, 1e-15).unwrap();
        prop_assert!((h.total_mass() - 1.0).abs() <= 1e-12);
        for (n, &a) in h.coefficients.iter().enumerate() {
            let floor = -(-t * triadic_eigenvalue(s, n as u32 + 1)).exp_m1();
            prop_assert!(a > 0.0);
            prop_assert!(a >= floor * (1.0 - 1e-12));
        }
    }

    #[test]
    fn msd_is_monotone(t in (-6.0f64..-0.5).prop_map(|e| 10f64.powf(e)), beta in 0.5f64..3.0) {
        let s = triadic_s0();
        prop_assert!(msd_analytic(t * 1.5, s, beta).unwrap() > msd_analytic(t, s, beta).unwrap());
        prop_assert!(msd_analytic(t, s, beta + 0.25).unwrap() < msd_analytic(t, s, beta).unwrap());
    }
}

#[test]
fn chapman_kolmogorov_by_cylinder_convolution() {
    let s = triadic_s0();
    for (t, u) in [(0.01, 0.03), (0.2, 0.05), (1e-4, 2e-4)] {
        let (a, b) = (
            heat_series(t, s, 1e-16, 20).unwrap(),
            heat_series(u, s, 1e-16, 20).unwrap(),
        );
        let both = heat_series(t + u, s, 1e-16, 20).unwrap();
        let mut start = vec![0.0; 1 << DEPTH];
        start[0] = 1.0;
        let end = cylinder_step(&b, &cylinder_step(&a, &start));
        let mut law = vec![0.0; DEPTH as usize];
        for (c, p) in end.iter().enumerate().skip(1) {
            law[level(0, c)] += p;
        }
        let pa: Vec<f64> = (0..40).map(|n| a.level_prob(n)).collect();
        let pb: Vec<f64> = (0..40).map(|n| b.level_prob(n)).collect();
        let composed = compose_level_laws(&pa, &pb);
        for n in 0..DEPTH as usize {
            assert!(
                (law[n] - both.level_prob(n)).abs() <= 1e-10,
                "t={t} u={u} level {n}"
            );
            assert!(
                (composed[n] - both.level_prob(n)).abs() <= 1e-12,
                "t={t} u={u} level {n}"
            );
        }
    }
}

#[test]
fn long_time_msd_is_the_stationary_pair_mean() {
    for beta in [0.5, 1.0, 2.0, 3.0] {
        // exhaustive: x = word 0, y over every depth-12 cylinder
        let cells = 1usize << DEPTH;
        let pair_mean: f64 = (1..cells)
            .map(|c| 3f64.powf(-beta * level(0, c) as f64) / cells as f64)
            .sum();
        let closed = 0.5 / (1.0 - 1.0 / (2.0 * 3f64.powf(beta)));
        assert!((pair_mean - closed).abs() < 2f64.powi(-(DEPTH as i32)));
        assert!((msd_analytic(100.0, triadic_s0(), beta).unwrap() - closed).abs() < 1e-12);
    }
}

#[test]
fn linear_regime_constant_is_finite_and_positive() {
    let s0 = triadic_s0();
    // the approach is like t^{(β−β_c)/β_c} with β_c = s0 + 2 − s, so stay well past β_c
    for (s, beta) in [(s0, 3.0), (s0 + 1.0, 2.0), (s0 - 1.0, 5.0)] {
        let c = linear_regime_constant(s, beta).unwrap();
        assert!(c.is_finite() && c > 0.0);
        let t = 1e-10;
        assert!(
            (msd_analytic(t, s, beta).unwrap() / t - c).abs() < 1e-2 * c,
            "s={s} β={beta}"
        );
    }
}

#[test]
fn level_histogram_matches_the_law() {
    let tree = triadic_tree(16).unwrap();
    let series = heat_coefficients(0.1, triadic_s0(), 1e-15).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let draws = 100_000;
    let mut counts = vec![0usize; 17];
    for _ in 0..draws {
        let x = sample_stationary(&tree, &mut rng);
        let y = sample_increment(&tree, &x, &series, &mut rng);
        let n = match lcp(&tree, &x, &y) {
            Ok(v) => tree.height(v) as usize,
            Err(_) => 16,
        };
        counts[n] += 1;
    }
    for n in 0..12 {
        let p = series.level_prob(n);
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (counts[n] as f64 - draws as f64 * p).abs() <= 4.0 * sigma.max(1.0),
            "level {n}"
        );
    }
}

#[test]
fn long_and_short_time_increments() {
    let tree = triadic_tree(10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let late = heat_coefficients(1e3, triadic_s0(), 1e-15).unwrap();
    let x = BoundaryPath::from_word(&tree, &[0; 10]).unwrap();
    let ones: usize = (0..10_000)
        .map(|_| sample_increment(&tree, &x, &late, &mut rng).word(&tree)[0])
        .sum();
    // χ² with one degree of freedom at the 0.1% level
    let chi2 = (ones as f64 - 5000.0).powi(2) / 2500.0;
    assert!(chi2 < 10.83, "{ones}");
    let early = heat_coefficients(1e-6, triadic_s0(), 1e-15).unwrap();
    let far = (0..10_000)
        .filter(|_| sample_increment(&tree, &x, &early, &mut rng).word(&tree)[0] == 1)
        .count();
    assert!(far <= 2);
}

#[test]
fn monte_carlo_is_seeded_and_close() {
    let tree = triadic_tree(16).unwrap();
    let grid = [1e-3, 1e-2, 1e-1];
    let a = msd_monte_carlo(&tree, &grid, triadic_s0(), 2.0, 20_000, 7).unwrap();
    assert_eq!(
        a,
        msd_monte_carlo(&tree, &grid, triadic_s0(), 2.0, 20_000, 7).unwrap()
    );
    for p in &a {
        assert!((p.mc_mean - p.analytic).abs() <= 4.0 * p.mc_stderr, "{p:?}");
    }
}

#[test]
fn trajectory_states_resolve_to_depth() {
    let tree = triadic_tree(9).unwrap();
    let traj = simulate_trajectory(&tree, triadic_s0(), &[0.01, 0.1, 1.0, 10.0], 3).unwrap();
    assert!(traj.states.iter().all(|x| x.prefix().len() == 10));
}

#[test]
fn vladimirov_on_haar_functions() {
    let depth = 7;
    let tree = triadic_tree(depth).unwrap();
    let mu = measure(&tree).unwrap();
    let op = assemble(&tree, &mu, 2.0, depth).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for w in haar_words(5) {
        let m = w.len().max(1) as u32;
        let phi = haar_function(&w, m).unwrap();
        let f = LocallyConstant::new(m, phi.values.clone()).unwrap();
        let eig = triadic_eigenvalue(2.0, w.len() as u32) / 3.0;
        let word: Vec<usize> = (0..depth).map(|_| rng.random_range(0..2)).collect();
        let z = BoundaryPath::from_word(&tree, &word).unwrap();
        let direct = vladimirov_direct(&tree, &f, &z).unwrap();
        assert!((direct - eig * f.eval(&word)).abs() < 1e-12, "{w:?}");
        for n in m..=depth {
            let q = vladimirov_quotient(&tree, &f, &z, n, &op).unwrap();
            assert!((q - direct).abs() < 1e-10, "{w:?} n={n}");
        }
    }
}
