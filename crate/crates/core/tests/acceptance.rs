//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! A criterion listed with a `known` reason is expected to fail as stated; it
//! is still evaluated and reported, but does not fail the run.

use std::time::{Duration, Instant};

use cantor_core::diffusion::{
    heat_coefficients, heat_series, log_regime_constant, msd_analytic, msd_monte_carlo,
    triadic_tree, vladimirov_direct, vladimirov_quotient, LocallyConstant,
};
use cantor_core::laplacian::{
    assemble, closed_form_eigenvalues, eigensolve, haar_function, haar_words, triadic_eigenvalue,
    triadic_s0, weyl_fit,
};
use cantor_core::linalg::{expm, Matrix};
use cantor_core::spectral::{
    abscissa, abscissa_estimate, box_dimension_estimate, commutator_norm, measure,
    measure_by_extrapolation, random_choice, witness_choice, WeightClasses,
};
use cantor_core::ultrametric::{
    distance, embed, embedding_distance, subdominant_ultrametric, BoundaryPath, FiniteMetric,
};
use cantor_core::GeneratorTag;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Option<Duration>,
    known: Option<&'static str>,
    run: fn() -> Outcome,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn s0() -> f64 {
    triadic_s0()
}

fn triadic_tag() -> GeneratorTag {
    GeneratorTag::Uniform {
        branching: 2,
        ratio: 1.0 / 3.0,
    }
}

fn random_word(rng: &mut impl Rng, len: u32) -> Vec<usize> {
    (0..len).map(|_| rng.random_range(0..2)).collect()
}

fn c1_dimension() -> Outcome {
    let exact = 2f64.ln() / 3f64.ln();
    let moran = abscissa(&triadic_tree(8).unwrap()).unwrap();
    let classes = WeightClasses::generated(&triadic_tag(), 1.0, 30).unwrap();
    let est = abscissa_estimate(&classes).unwrap();
    let bx = box_dimension_estimate(&classes).unwrap();
    outcome(
        (moran - exact).abs() <= 1e-12 && (est - exact).abs() <= 1e-3 && (bx - exact).abs() <= 1e-2,
        format!("moran {moran:.15} estimator {est:.6} box {bx:.6} (ln2/ln3 = {exact:.15})"),
    )
}

fn c2_measure() -> Outcome {
    let tree = triadic_tree(10).unwrap();
    let closed = measure(&tree).unwrap();
    let exact = (0..tree.len() as u32).all(|v| closed.get(v) == 0.5f64.powi(tree.height(v) as i32));
    let extra = measure_by_extrapolation(&tree, s0()).unwrap();
    let worst = (0..tree.len())
        .map(|v| (closed.values[v] - extra.values[v]).abs())
        .fold(0.0, f64::max);
    let drift = closed
        .additivity_drift(&tree)
        .max(extra.additivity_drift(&tree));
    outcome(
        exact && worst <= 1e-6 && drift <= 1e-10,
        format!(
            "closed form exact: {exact}, extrapolation max error {worst:.2e}, drift {drift:.2e}"
        ),
    )
}

fn c3_spectrum() -> Outcome {
    let tree = triadic_tree(8).unwrap();
    let mu = measure(&tree).unwrap();
    let expected_mult: Vec<u64> = std::iter::once(1)
        .chain((0..8).map(|k| 1u64 << k))
        .collect();
    let mut worst = 0.0f64;
    let mut mult_ok = true;
    let mut has_small = false;
    for s in [s0() - 1.0, s0(), s0() + 1.0, s0() + 2.0] {
        let numeric = eigensolve(&assemble(&tree, &mu, s, 8).unwrap()).unwrap();
        let closed = closed_form_eigenvalues(s, 8).unwrap();
        mult_ok &=
            numeric.multiplicities == expected_mult && closed.multiplicities == expected_mult;
        for (a, b) in numeric.eigenvalues.iter().zip(&closed.eigenvalues).skip(1) {
            worst = worst.max((a - b).abs() / b);
        }
        mult_ok &= numeric.eigenvalues[0] == 0.0;
        if s == s0() {
            has_small = [4.0, 38.0, 344.0].iter().all(|x| {
                numeric
                    .eigenvalues
                    .iter()
                    .any(|l| (l - x).abs() <= 1e-8 * x)
            });
        }
    }
    outcome(
        worst <= 1e-8 && mult_ok && has_small,
        format!("max relative error {worst:.2e}, multiplicities exact: {mult_ok}, 4/38/344 present: {has_small}"),
    )
}

fn c4_haar() -> Outcome {
    let depth = 6;
    let tree = triadic_tree(depth).unwrap();
    let mu = measure(&tree).unwrap();
    let op = assemble(&tree, &mu, s0(), depth).unwrap();
    let phis: Vec<_> = haar_words(depth as usize)
        .into_iter()
        .map(|w| haar_function(&w, depth).unwrap())
        .collect();
    let mut gram = 0.0f64;
    for (i, a) in phis.iter().enumerate() {
        for (j, b) in phis.iter().enumerate() {
            let ip: f64 = a
                .values
                .iter()
                .zip(&b.values)
                .zip(&op.mu)
                .map(|((x, y), m)| x * y * m)
                .sum();
            gram = gram.max((ip - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let mut eig = 0.0f64;
    for phi in &phis {
        let lam = triadic_eigenvalue(s0(), phi.omega.len() as u32);
        let d = op.apply_generator(&phi.values);
        for (x, y) in d.iter().zip(&phi.values) {
            eig = eig.max((x + lam * y).abs());
        }
    }
    outcome(
        gram <= 1e-12 && eig <= 1e-8,
        format!(
            "{} functions, Gram deviation {gram:.2e}, eigen residual {eig:.2e}",
            phis.len()
        ),
    )
}

fn c5_weyl() -> Outcome {
    let fit = weyl_fit(&closed_form_eigenvalues(s0(), 20).unwrap()).unwrap();
    let target = s0() / 2.0;
    outcome(
        (fit.exponent - target).abs() <= 0.01,
        format!("fitted exponent {:.5} vs s0/2 = {target:.5}", fit.exponent),
    )
}

fn c6_heat() -> Outcome {
    // normalization and positivity
    let mut mass_err = 0.0f64;
    let mut positive = true;
    for s in [s0() - 1.0, s0(), s0() + 1.0] {
        for k in 0..=50 {
            let t = 10f64.powf(-8.0 + 10.0 * k as f64 / 50.0);
            let h = heat_coefficients(t, s, 1e-15).unwrap();
            mass_err = mass_err.max((h.total_mass() - 1.0).abs());
            positive &= h.coefficients.iter().all(|&a| a > 0.0);
        }
    }
    // matrix exponential of the assembled generator at depth 8
    let depth = 8;
    let tree = triadic_tree(depth).unwrap();
    let mu = measure(&tree).unwrap();
    let op = assemble(&tree, &mu, s0(), depth).unwrap();
    let dim = op.dim();
    let root: Vec<f64> = op.mu.iter().map(|m| m.sqrt()).collect();
    let mut oracle = 0.0f64;
    for t in [1e-3, 1e-2, 1e-1, 1.0] {
        let mut tm = Matrix::from_fn(dim, |a, b| op.matrix.get(a, b));
        tm.scale(t);
        // √μ spans the kernel exactly; squaring drifts that mode by ~2^k·eps,
        // so restore it: E ← P E P + v vᵀ with P = I − v vᵀ
        let raw = expm(&tm);
        let ev: Vec<f64> = (0..dim)
            .map(|a| (0..dim).map(|b| raw.get(a, b) * root[b]).sum())
            .collect();
        let vev: f64 = root.iter().zip(&ev).map(|(x, y)| x * y).sum();
        let e = Matrix::from_fn(dim, |a, b| {
            raw.get(a, b) - root[a] * ev[b] - ev[a] * root[b] + root[a] * root[b] * (vev + 1.0)
        });
        let series = heat_series(t, s0(), 1e-16, depth as usize + 1).unwrap();
        let stay = 1.0
            - (0..depth as usize)
                .map(|n| series.level_prob(n))
                .sum::<f64>();
        for a in 0..dim {
            for b in 0..dim {
                let avg = e.get(a, b) / (op.mu[a] * op.mu[b]).sqrt();
                let kernel = if a == b {
                    stay / op.mu[a]
                } else {
                    let n = ((a ^ b).leading_zeros() - (usize::BITS - depth)) as usize;
                    series.coefficient(n)
                };
                oracle = oracle.max((avg - kernel).abs());
            }
        }
    }
    // ‖κ_n‖² under μ×μ over pairs of height-(n+1) cylinders
    let mut kappa = true;
    for n in 0..10u32 {
        let cells = 1usize << (n + 1);
        let cell = 0.5f64.powi(n as i32 + 1);
        let mut sq = 0.0;
        for a in 0..cells {
            for b in 0..cells {
                let meet = if a == b {
                    n + 1
                } else {
                    (a ^ b).leading_zeros() - (usize::BITS - n - 1)
                };
                if meet == n {
                    sq += cell * cell;
                }
            }
        }
        kappa &= sq == 0.5f64.powi(n as i32 + 1) && sq.sqrt() == 2f64.powf(-(n as f64 + 1.0) / 2.0);
    }
    outcome(
        mass_err <= 1e-12 && positive && oracle <= 1e-8 && kappa,
        format!(
            "max |Σp − 1| {mass_err:.2e}, a_n > 0: {positive}, expm oracle {oracle:.2e}, ‖κ_n‖ exact: {kappa}"
        ),
    )
}

fn msd_ratio(t: f64) -> f64 {
    msd_analytic(t, s0(), 2.0).unwrap() / (t * (1.0 / t).ln())
}

fn c7a_log_regime() -> Outcome {
    let target = 1.0 / (2.0 * 3f64.ln());
    let ratios: Vec<String> = (4..=8)
        .map(|k| format!("{:.5}", msd_ratio(10f64.powi(-k))))
        .collect();
    let r = msd_ratio(1e-8);
    outcome(
        (r - target).abs() <= 0.02 * target,
        format!(
            "ratio at t = 1e-4..1e-8: [{}], target 1/(2 ln 3) = {target:.5}",
            ratios.join(", ")
        ),
    )
}

fn c7a_supplement() -> Outcome {
    let limit = log_regime_constant(s0()).unwrap();
    let r = msd_ratio(1e-8);
    outcome(
        (r - limit).abs() <= 0.02 * limit && (limit - 1.0 / 3f64.ln()).abs() < 1e-14,
        format!("ratio at t = 1e-8 {r:.5} vs series limit 1/ln 3 = {limit:.5}"),
    )
}

fn c7b_monte_carlo() -> Outcome {
    let tree = triadic_tree(16).unwrap();
    let grid: Vec<f64> = (0..9).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect();
    let curve = msd_monte_carlo(&tree, &grid, s0(), 2.0, 100_000, 20240601).unwrap();
    let worst = curve
        .iter()
        .map(|p| (p.mc_mean - p.analytic).abs() / p.mc_stderr)
        .fold(0.0, f64::max);
    outcome(
        worst <= 3.0,
        format!("9 points on t ∈ [1e-4, 1], 1e5 paths, max |z| = {worst:.2}"),
    )
}

fn c8_vladimirov() -> Outcome {
    let depth = 8;
    let tree = triadic_tree(depth).unwrap();
    let mu = measure(&tree).unwrap();
    let op = assemble(&tree, &mu, 2.0, depth).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let m = rng.random_range(1..=depth);
        let values: Vec<f64> = (0..1usize << m)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let f = LocallyConstant::new(m, values).unwrap();
        let z = BoundaryPath::from_word(&tree, &random_word(&mut rng, depth)).unwrap();
        let n = rng.random_range(m..=depth);
        let q = vladimirov_quotient(&tree, &f, &z, n, &op).unwrap();
        let d = vladimirov_direct(&tree, &f, &z).unwrap();
        worst = worst.max((q - d).abs());
    }
    outcome(
        worst <= 1e-10,
        format!("50 functions, max |quotient − direct| {worst:.2e}"),
    )
}

fn chain_oracle(d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    fn walk(d: &[Vec<f64>], at: usize, used: &mut Vec<bool>, worst: f64, best: &mut [f64]) {
        best[at] = best[at].min(worst);
        for next in 0..d.len() {
            if !used[next] {
                used[next] = true;
                walk(d, next, used, worst.max(d[at][next]), best);
                used[next] = false;
            }
        }
    }
    (0..d.len())
        .map(|x| {
            let mut best = vec![f64::INFINITY; d.len()];
            let mut used = vec![false; d.len()];
            used[x] = true;
            walk(d, x, &mut used, 0.0, &mut best);
            best[x] = 0.0;
            best
        })
        .collect()
}

fn c9_subdominant() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut exact = true;
    let mut dominated = true;
    let mut ultra = true;
    for i in 0..200 {
        let n = rng.random_range(2..=8);
        // alternate tie-heavy lattice metrics and generic Euclidean ones
        let pts: Vec<[f64; 2]> = if i % 2 == 0 {
            let mut p: Vec<[f64; 2]> = Vec::new();
            while p.len() < n {
                let q = [rng.random_range(0..5) as f64, rng.random_range(0..5) as f64];
                if !p.contains(&q) {
                    p.push(q);
                }
            }
            p
        } else {
            (0..n).map(|_| [rng.random(), rng.random()]).collect()
        };
        let rows: Vec<Vec<f64>> = pts
            .iter()
            .map(|a| {
                pts.iter()
                    .map(|b| {
                        if i % 2 == 0 {
                            (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
                        } else {
                            (a[0] - b[0]).hypot(a[1] - b[1])
                        }
                    })
                    .collect()
            })
            .collect();
        let dend = subdominant_ultrametric(&FiniteMetric::new(rows.clone()).unwrap()).unwrap();
        let oracle = chain_oracle(&rows);
        for a in 0..n {
            for b in 0..n {
                exact &= dend.delta.get(a, b) == oracle[a][b];
                dominated &= dend.delta.get(a, b) <= rows[a][b];
            }
        }
        ultra &= dend.delta.is_ultrametric();
    }
    outcome(
        exact && dominated && ultra,
        format!("200 metrics: oracle match {exact}, δ ≤ d {dominated}, ultrametric {ultra}"),
    )
}

fn c10_embedding() -> Outcome {
    let depth = 20;
    let tree = triadic_tree(depth).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let tail = 3f64.powi(-(depth as i32));
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..1000 {
        let x = BoundaryPath::from_word(&tree, &random_word(&mut rng, depth)).unwrap();
        let y = BoundaryPath::from_word(&tree, &random_word(&mut rng, depth)).unwrap();
        let d = distance(&tree, &x, &y);
        let e = embedding_distance(&embed(&tree, &x), &embed(&tree, &y));
        worst = worst.max((e - d).abs());
        ok &= (e - d).abs() <= 1e-12 + tail * tail;
    }
    outcome(
        ok,
        format!("1000 pairs at depth 20, max |‖Φx − Φy‖ − d| {worst:.2e}"),
    )
}

fn c11_connes() -> Outcome {
    let depth = 10;
    let tree = triadic_tree(depth).unwrap();
    let mu = measure(&tree).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for k in 0..100 {
        let tau = random_choice(&tree, &mu, 1000 + k).unwrap();
        let x = mu.sample_point(&tree, &mut rng);
        worst = worst.max(commutator_norm(&tree, |p| distance(&tree, &x, p), &tau));
    }
    let mut witness = true;
    for _ in 0..100 {
        let x = BoundaryPath::from_word(&tree, &random_word(&mut rng, depth)).unwrap();
        let y = BoundaryPath::from_word(&tree, &random_word(&mut rng, depth)).unwrap();
        if x == y {
            continue;
        }
        let tau = witness_choice(&tree, &x, &y).unwrap();
        let meet = cantor_core::ultrametric::lcp(&tree, &x, &y).unwrap() as usize;
        let (a, b) = tau.pairs[meet].as_ref().unwrap();
        let gap = (distance(&tree, &x, a) - distance(&tree, &x, b)).abs();
        witness &= gap == distance(&tree, &x, &y);
        witness &= commutator_norm(&tree, |p| distance(&tree, &x, p), &tau) == 1.0;
    }
    outcome(
        worst <= 1.0 + 1e-12 && witness,
        format!("max ‖[D, d_x]‖ over 100 (x, τ) = {worst:.15}, witness exact: {witness}"),
    )
}

fn main() {
    let criteria = [
        Criterion {
            id: "1",
            name: "abscissa and dimension",
            budget: Some(Duration::from_secs(1)),
            known: None,
            run: c1_dimension,
        },
        Criterion {
            id: "2",
            name: "canonical measure",
            budget: Some(Duration::from_secs(5)),
            known: None,
            run: c2_measure,
        },
        Criterion {
            id: "3",
            name: "spectrum vs closed form",
            budget: Some(Duration::from_secs(60)),
            known: None,
            run: c3_spectrum,
        },
        Criterion {
            id: "4",
            name: "Haar eigenbasis",
            budget: None,
            known: None,
            run: c4_haar,
        },
        Criterion {
            id: "5",
            name: "Weyl law",
            budget: None,
            known: None,
            run: c5_weyl,
        },
        Criterion {
            id: "6",
            name: "heat kernel",
            budget: None,
            known: None,
            run: c6_heat,
        },
        Criterion {
            id: "7a",
            name: "t ln(1/t) constant 1/(2 ln 3)",
            budget: None,
            known: Some("the series limit is 1/ln 3, twice the stated constant"),
            run: c7a_log_regime,
        },
        Criterion {
            id: "7a+",
            name: "t ln(1/t) constant vs series limit",
            budget: None,
            known: None,
            run: c7a_supplement,
        },
        Criterion {
            id: "7b",
            name: "Monte-Carlo msd",
            budget: Some(Duration::from_secs(120)),
            known: None,
            run: c7b_monte_carlo,
        },
        Criterion {
            id: "8",
            name: "Vladimirov routes",
            budget: None,
            known: None,
            run: c8_vladimirov,
        },
        Criterion {
            id: "9",
            name: "subdominant ultrametric",
            budget: None,
            known: None,
            run: c9_subdominant,
        },
        Criterion {
            id: "10",
            name: "Hilbert embedding",
            budget: None,
            known: None,
            run: c10_embedding,
        },
        Criterion {
            id: "11",
            name: "Connes bound",
            budget: None,
            known: None,
            run: c11_connes,
        },
    ];
    let mut unexpected = 0;
    for c in &criteria {
        let start = Instant::now();
        let out = (c.run)();
        let elapsed = start.elapsed();
        let in_time = c.budget.is_none_or(|b| elapsed <= b);
        let pass = out.pass && in_time;
        let budget = c.budget.map_or(String::new(), |b| format!(" / {:.0?}", b));
        let status = match (pass, c.known) {
            (true, _) => "PASS".to_string(),
            (false, Some(why)) => format!("FAIL (known: {why})"),
            (false, None) => {
                unexpected += 1;
                "FAIL".to_string()
            }
        };
        let late = if in_time { "" } else { " over budget" };
        println!(
            "{status} [{}] {}: {} ({:.2?}{budget}{late})",
            c.id, c.name, out.detail, elapsed
        );
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed");
        std::process::exit(1);
    }
}
