//! Heat kernel and jump diffusion of `Δ_s` on the triadic Cantor set.
//!
//! `K_t(x, y) = a_n(t, s)` when `height(x ∧ y) = n`, with
//! `a_n = 1 − 2^n e^{−tλ_{n+1}} + Σ_{m≤n} 2^{m−1} e^{−tλ_m}`. A time-`t`
//! increment lands at distance `3^{−n}` with probability `p_n = a_n 2^{−(n+1)}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{triadic_eigenvalue, triadic_s0, LevelOperator};
use crate::linalg::pairwise_sum;
use crate::tree::{build_uniform_tree, GeneratorTag, VertexId, WeightedTree};
use crate::ultrametric::{lcp, BoundaryPath};

/// Largest level the series is ever extended to.
pub const MAX_LEVELS: usize = 1000;

/// `tλ` beyond which `e^{−tλ}` is flushed to zero.
const FLUSH: f64 = 745.0;

pub fn triadic_tree(depth: u32) -> Result<WeightedTree> {
    build_uniform_tree(2, 1.0 / 3.0, depth)
}

fn check_triadic(tree: &WeightedTree) -> Result<()> {
    match tree.generator_tag() {
        GeneratorTag::Uniform {
            branching: 2,
            ratio,
        } if *ratio == 1.0 / 3.0 => Ok(()),
        _ => Err(Error::Unsupported(
            "the heat kernel series is only available on the triadic Cantor tree".into(),
        )),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatSeries {
    pub t: f64,
    pub s: f64,
    /// `a_n(t, s)` for `n = 0..=cutoff`
    pub coefficients: Vec<f64>,
    /// `p_n = a_n 2^{−(n+1)}`
    pub level_probs: Vec<f64>,
    pub cutoff: usize,
    /// `Σ_{n>cutoff} p_n`, closed with `e^{−tλ_m} = 0` past the cutoff
    pub tail_mass: f64,
    /// `M_s(t)·2^{−(cutoff+1)}`, a bound on the mass past the cutoff
    pub tail_bound: f64,
    /// `M_s(t) = 1 + Σ_m 2^{m−1} e^{−tλ_m}`, an upper bound for every `a_n`
    pub sup_bound: f64,
    /// first level whose exponential was flushed to zero
    pub flushed_from: Option<usize>,
}

/// `a_n(t, s)` and the level law, cut once the level mass and the bound on
/// everything past it drop below `tol` (relative to the accumulated mass).
pub fn heat_coefficients(t: f64, s: f64, tol: f64) -> Result<HeatSeries> {
    heat_series(t, s, tol, 0)
}

/// As [`heat_coefficients`], with at least `min_levels` coefficients.
pub fn heat_series(t: f64, s: f64, tol: f64, min_levels: usize) -> Result<HeatSeries> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "time {t} must be positive"
        )));
    }
    if !(s < triadic_s0() + 2.0) {
        return Err(Error::InvalidParameter(format!(
            "s = {s} is not below s0 + 2; the kernel series needs s < s0 + 2"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    // e_m = e^{−tλ_m}, g_m = 1 − e_m, m = 1..
    let mut flushed_from = None;
    let mut expo = |m: usize| -> (f64, f64) {
        let x = t * triadic_eigenvalue(s, m as u32);
        if x > FLUSH {
            if flushed_from.is_none() {
                flushed_from = Some(m);
            }
            (0.0, 1.0)
        } else {
            ((-x).exp(), -(-x).exp_m1())
        }
    };

    let mut g = vec![0.0];
    let mut e = vec![1.0];
    // M_s(t): terms 2^{m−1}e_m shrink super-geometrically once tλ_m > m ln 2
    let mut sup_bound = 1.0;
    let mut m = 1;
    loop {
        let (em, gm) = expo(m);
        e.push(em);
        g.push(gm);
        let term = 2f64.powi(m as i32 - 1) * em;
        sup_bound += term;
        if (term <= 1e-17 * sup_bound && t * triadic_eigenvalue(s, m as u32) > 2.0 * m as f64)
            || m >= MAX_LEVELS + 1
        {
            break;
        }
        m += 1;
    }
    // Levels with tλ_m ≤ ln 2 use g_m (no cancellation at small t); past them
    // a_n = A_J + Σ_{J<m≤n} 2^{m−1} e_m − 2^n e_{n+1}, A_J = 2^J − Σ_{m≤J} 2^{m−1} g_m.
    let j_split = (1..=MAX_LEVELS + 1)
        .find(|&m| t * triadic_eigenvalue(s, m as u32) > std::f64::consts::LN_2)
        .unwrap_or(MAX_LEVELS + 2)
        - 1;
    let mut level_probs = Vec::new();
    let mut coefficients = Vec::new();
    // Σ_{m≤min(n,J)} 2^{m−1} g_m and Σ_{J<m≤n} 2^{m−1} e_m
    let mut g_sum = 0.0;
    let mut e_sum = 0.0;
    let mut mass = 0.0;
    let mut n = 0;
    let closure = |n: usize, g_sum: f64, e_sum: f64| -> f64 {
        let j = j_split.min(n);
        2f64.powi(j as i32) - g_sum + e_sum
    };
    loop {
        while g.len() <= n + 1 {
            let (em, gm) = expo(g.len());
            e.push(em);
            g.push(gm);
        }
        if n >= 1 {
            let w = 2f64.powi(n as i32 - 1);
            if n <= j_split {
                g_sum += w * g[n];
            } else {
                e_sum += w * e[n];
            }
        }
        let a = if n < j_split {
            2f64.powi(n as i32) * g[n + 1] - g_sum
        } else {
            closure(n, g_sum, e_sum) - 2f64.powi(n as i32) * e[n + 1]
        };
        let p = a * 0.5f64.powi(n as i32 + 1);
        level_probs.push(p);
        coefficients.push(a);
        mass += p;
        let tail_bound = sup_bound * 0.5f64.powi(n as i32 + 1);
        let done = n + 1 >= min_levels && p <= tol * mass && tail_bound <= tol * mass;
        if done || n >= MAX_LEVELS {
            break;
        }
        n += 1;
    }
    let cutoff = n;
    // past the cutoff every e_m is taken as zero, so a_{cutoff+k} is constant
    let m = cutoff + 1;
    let w = 2f64.powi(m as i32 - 1);
    if m <= j_split {
        g_sum += w * g[m];
    } else {
        e_sum += w * e[m];
    }
    let a_tail = closure(m, g_sum, e_sum);
    Ok(HeatSeries {
        t,
        s,
        tail_mass: a_tail * 0.5f64.powi(m as i32),
        tail_bound: sup_bound * 0.5f64.powi(cutoff as i32 + 1),
        coefficients,
        level_probs,
        cutoff,
        sup_bound,
        flushed_from,
    })
}

impl HeatSeries {
    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.level_probs) + self.tail_mass
    }

    /// `a_n`, continuing past the cutoff with the flushed recurrence.
    pub fn coefficient(&self, n: usize) -> f64 {
        if n <= self.cutoff {
            return self.coefficients[n];
        }
        self.level_prob(n) * 2f64.powi(n as i32 + 1)
    }

    /// `p_n`; past the cutoff the tail mass halves level by level.
    pub fn level_prob(&self, n: usize) -> f64 {
        if n <= self.cutoff {
            return self.level_probs[n];
        }
        self.tail_mass * 0.5f64.powi((n - self.cutoff) as i32)
    }

    /// Draws a jump level from the level law.
    pub fn sample_level<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u = rng.random::<f64>();
        for (n, &p) in self.level_probs.iter().enumerate() {
            u -= p;
            if u < 0.0 {
                return n;
            }
        }
        // past the cutoff, P(cutoff + 1 + k) = tail·2^{−(k+1)}
        let mut n = self.cutoff + 1;
        while rng.random::<bool>() && n < MAX_LEVELS + 64 {
            n += 1;
        }
        n
    }

    /// `E d(X_0, X_t)^β = Σ_n 3^{−βn} p_n`, tail included.
    pub fn moment(&self, beta: f64) -> f64 {
        let r = 3f64.powf(-beta);
        let terms: Vec<f64> = self
            .level_probs
            .iter()
            .enumerate()
            .map(|(n, p)| r.powi(n as i32) * p)
            .collect();
        let n1 = self.cutoff as i32 + 1;
        let tail = 0.5 * self.tail_mass * r.powi(n1) / (1.0 - 0.5 * r);
        pairwise_sum(&terms) + tail
    }
}

/// `K_t(x, y)` for `x ≠ y`.
pub fn heat_kernel(
    tree: &WeightedTree,
    x: &BoundaryPath,
    y: &BoundaryPath,
    t: f64,
    s: f64,
) -> Result<f64> {
    check_triadic(tree)?;
    let v = lcp(tree, x, y).map_err(|_| {
        Error::InvalidParameter("the heat kernel is not defined on the diagonal".into())
    })?;
    let n = tree.height(v) as usize;
    let series = heat_series(t, s, 1e-16, n + 1)?;
    Ok(series.coefficient(n))
}

/// A μ-random point: fair coin flips down to the truncation.
pub fn sample_stationary<R: Rng + ?Sized>(tree: &WeightedTree, rng: &mut R) -> BoundaryPath {
    let mut v = tree.root();
    while !tree.is_leaf(v) {
        let kids = tree.children(v);
        v = kids.start + rng.random_range(0..kids.len() as VertexId);
    }
    BoundaryPath::through(tree, v)
}

/// One time-`t` step from `x`: a level `n` from the level law, then a μ-random
/// point of `{y : height(x ∧ y) = n}`. A level at or past the truncation leaves
/// the resolved point unchanged.
pub fn sample_increment<R: Rng + ?Sized>(
    tree: &WeightedTree,
    x: &BoundaryPath,
    series: &HeatSeries,
    rng: &mut R,
) -> BoundaryPath {
    let n = series.sample_level(rng);
    let leaf = x.leaf(tree);
    if n as u32 >= tree.height(leaf) {
        return BoundaryPath::through(tree, leaf);
    }
    let stay = tree
        .ancestor_at(leaf, n as u32 + 1)
        .expect("level is above the leaf");
    let parent = tree.parent(stay).expect("non-root");
    let others: Vec<VertexId> = tree.children(parent).filter(|&c| c != stay).collect();
    let mut v = others[rng.random_range(0..others.len())];
    while !tree.is_leaf(v) {
        let kids = tree.children(v);
        v = kids.start + rng.random_range(0..kids.len() as VertexId);
    }
    BoundaryPath::through(tree, v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub states: Vec<BoundaryPath>,
    pub seed: u64,
    pub s: f64,
}

/// A path of the process observed at increasing `times`, started from μ at time 0.
pub fn simulate_trajectory(
    tree: &WeightedTree,
    s: f64,
    times: &[f64],
    seed: u64,
) -> Result<TrajectorySample> {
    check_triadic(tree)?;
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.first().is_some_and(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter(
            "times must be positive and increasing".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = sample_stationary(tree, &mut rng);
    let mut prev = 0.0;
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        let series = heat_coefficients(t - prev, s, 1e-15)?;
        x = sample_increment(tree, &x, &series, &mut rng);
        states.push(x.clone());
        prev = t;
    }
    Ok(TrajectorySample {
        times: times.to_vec(),
        states,
        seed,
        s,
    })
}

/// `E d(X_{t0}, X_{t0+t})^β` under the stationary law.
pub fn msd_analytic(t: f64, s: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "β = {beta} must be positive"
        )));
    }
    Ok(heat_coefficients(t, s, 1e-16)?.moment(beta))
}

/// `lim msd/t` for `β > s0 + 2 − s`:
/// `λ_1/2 + ½ Σ_{n≥1} (2·3^β)^{−n} (2^n λ_{n+1} − Σ_{m≤n} 2^{m−1} λ_m)`.
pub fn linear_regime_constant(s: f64, beta: f64) -> Result<f64> {
    let s0 = triadic_s0();
    if !(beta > s0 + 2.0 - s) {
        return Err(Error::InvalidParameter(format!(
            "β = {beta} is not above s0 + 2 − s = {}",
            s0 + 2.0 - s
        )));
    }
    let lam = |m: usize| triadic_eigenvalue(s, m as u32);
    let mut total = lam(1) / 2.0;
    // running Σ_{m≤n} 2^{m−1} λ_m, scaled by (2·3^β)^{−n}
    let r = 1.0 / (2.0 * 3f64.powf(beta));
    let mut acc = 0.0;
    let mut w = 1.0;
    for n in 1..=4000 {
        w *= r;
        acc += 2f64.powi(n as i32 - 1) * lam(n);
        let term = 0.5 * w * (2f64.powi(n as i32) * lam(n + 1) - acc);
        total += term;
        if term.abs() <= 1e-17 * total {
            break;
        }
    }
    Ok(total)
}

/// `lim msd/(t ln(1/t))` at the critical exponent `β = s0 + 2 − s`:
/// `k (1 − 1/(2q − 1)) / (β ln 3)` with `q = 3^{s0+2−s}`, `k = 1/(q − 1) + 2`.
/// Equals `1/ln 3` at `s = s0`.
pub fn log_regime_constant(s: f64) -> Result<f64> {
    let beta = triadic_s0() + 2.0 - s;
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("needs s < s0 + 2".into()));
    }
    let q = 3f64.powf(beta);
    let k = 1.0 / (q - 1.0) + 2.0;
    Ok(k * (1.0 - 1.0 / (2.0 * q - 1.0)) / (beta * 3f64.ln()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsdPoint {
    pub t: f64,
    pub analytic: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
}

/// Per-path RNG: one ChaCha stream per path index, keyed by the master seed and
/// the grid index, so results do not depend on scheduling.
fn path_rng(seed: u64, grid_index: usize, path: usize) -> ChaCha8Rng {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (grid_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(path as u64);
    rng
}

/// Monte-Carlo `E d(X_0, X_t)^β`: stationary start, one exact increment per `t`.
pub fn msd_monte_carlo(
    tree: &WeightedTree,
    t_grid: &[f64],
    s: f64,
    beta: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<MsdPoint>> {
    check_triadic(tree)?;
    if n_paths < 100 {
        return Err(Error::InvalidParameter(format!(
            "{n_paths} paths are too few for a standard error; use at least 100"
        )));
    }
    t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let series = heat_coefficients(t, s, 1e-16)?;
            let samples: Vec<f64> = (0..n_paths)
                .into_par_iter()
                .map(|p| {
                    let mut rng = path_rng(seed, i, p);
                    let x = sample_stationary(tree, &mut rng);
                    let y = sample_increment(tree, &x, &series, &mut rng);
                    crate::ultrametric::distance(tree, &x, &y).powf(beta)
                })
                .collect();
            let n = n_paths as f64;
            let mean = pairwise_sum(&samples) / n;
            let sq: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
            let var = pairwise_sum(&sq) / (n - 1.0);
            Ok(MsdPoint {
                t,
                analytic: series.moment(beta),
                mc_mean: mean,
                mc_stderr: (var / n).sqrt(),
            })
        })
        .collect()
}

/// Level law of two independent increments taken in turn.
///
/// Different levels give the smaller level. Equal levels `k` flip the same
/// symbol twice, so the result is level `n > k` with probability `2^{−(n−k)}`.
/// Mass past the shorter input is ignored; the result has that length.
pub fn compose_level_laws(p: &[f64], q: &[f64]) -> Vec<f64> {
    let len = p.len().min(q.len());
    let total_p: f64 = p.iter().sum();
    let total_q: f64 = q.iter().sum();
    let mut above_p = 1.0f64.max(total_p);
    let mut above_q = 1.0f64.max(total_q);
    let mut out = vec![0.0; len];
    let mut carry = 0.0;
    for n in 0..len {
        above_p -= p[n];
        above_q -= q[n];
        // carry holds Σ_{k<n} p_k q_k 2^{−(n−k)}
        carry *= 0.5;
        out[n] = p[n] * above_q + q[n] * above_p + carry;
        carry += p[n] * q[n];
    }
    out
}

/// A function constant on height-`depth` cylinders of the triadic tree, given
/// by its values in binary word order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocallyConstant {
    pub depth: u32,
    pub values: Vec<f64>,
}

impl LocallyConstant {
    pub fn new(depth: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() != 1usize << depth {
            return Err(Error::InvalidParameter(format!(
                "{} values for depth {depth}",
                values.len()
            )));
        }
        Ok(LocallyConstant { depth, values })
    }

    /// Value on the cylinder containing the point with binary word `word`.
    pub fn eval(&self, word: &[usize]) -> f64 {
        let idx = word[..self.depth as usize]
            .iter()
            .fold(0usize, |a, &b| 2 * a + b);
        self.values[idx]
    }

    /// Values on height-`n` cylinders, `n ≥ depth`.
    pub fn refine(&self, n: u32) -> Vec<f64> {
        let shift = n - self.depth;
        (0..1usize << n).map(|a| self.values[a >> shift]).collect()
    }
}

fn resolved_word(tree: &WeightedTree, z: &BoundaryPath, len: u32) -> Result<Vec<usize>> {
    let word = z.word(tree);
    if word.len() < len as usize {
        return Err(Error::InvalidParameter(format!(
            "the tree resolves only {} symbols, {len} needed",
            word.len()
        )));
    }
    Ok(word)
}

/// `(1/3)(1/μ([v_n])) ⟨χ_{v_n}, −Δ_2 f⟩` with `v_n` the height-`n` vertex on `z`.
pub fn vladimirov_quotient(
    tree: &WeightedTree,
    f: &LocallyConstant,
    z: &BoundaryPath,
    n: u32,
    op: &LevelOperator,
) -> Result<f64> {
    check_triadic(tree)?;
    if n < f.depth {
        return Err(Error::InvalidParameter(format!(
            "level {n} is coarser than the function's level {}",
            f.depth
        )));
    }
    if op.s != 2.0 {
        return Err(Error::InvalidParameter(format!(
            "operator has s = {}, not 2",
            op.s
        )));
    }
    if op.depth < n {
        return Err(Error::InvalidParameter(format!(
            "operator level {} is coarser than {n}",
            op.depth
        )));
    }
    let word = resolved_word(tree, z, op.depth)?;
    let g = op.apply_generator(&f.refine(op.depth));
    // basis cylinders inside [v_n] are a contiguous block
    let prefix = word[..n as usize].iter().fold(0usize, |a, &b| 2 * a + b);
    let shift = op.depth - n;
    let block = prefix << shift..(prefix + 1) << shift;
    let mass: f64 = op.mu[block.clone()].iter().sum();
    let inner: f64 = block.map(|a| -g[a] * op.mu[a]).sum();
    Ok(inner / mass / 3.0)
}

/// `(4/3) Σ_j 4^j ∫_{S_j(z)} (f(z) − f(y)) dμ(y)` where `S_j(z)` is the sphere
/// of points whose common prefix with `z` has length `j`, i.e. the Vladimirov
/// operator with `p = 2` and `|z − y|₂ = 2^{−j}` on that sphere.
pub fn vladimirov_direct(
    tree: &WeightedTree,
    f: &LocallyConstant,
    z: &BoundaryPath,
) -> Result<f64> {
    check_triadic(tree)?;
    let m = f.depth;
    let word = resolved_word(tree, z, m)?;
    let fz = f.eval(&word);
    let cell = 0.5f64.powi(m as i32);
    let zi = word[..m as usize].iter().fold(0usize, |a, &b| 2 * a + b);
    let mut total = 0.0;
    for j in 0..m {
        // cylinders of the sphere: keep j symbols, flip symbol j, anything after
        let flip = zi ^ (1 << (m - 1 - j));
        let keep = flip >> (m - 1 - j);
        let free = m - 1 - j;
        let integral: f64 = (0..1usize << free)
            .map(|rest| cell * (fz - f.values[(keep << free) | rest]))
            .sum();
        total += 4f64.powi(j as i32) * integral;
    }
    Ok(4.0 / 3.0 * total)
}
