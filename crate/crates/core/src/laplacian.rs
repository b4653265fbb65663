//! The operator `Δ_s` restricted to functions constant on height-`n` cylinders,
//! its spectrum, and the closed forms on the triadic Cantor set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_eigen, Eigen, Matrix};
use crate::spectral::CylinderMeasure;
use crate::tree::{VertexId, WeightedTree};

/// `Δ_s` on the span of the height-`n` indicators, in the orthonormal basis
/// `e_v = χ_v / √μ([v])`.
#[derive(Clone, Debug)]
pub struct LevelOperator {
    pub depth: u32,
    pub s: f64,
    pub basis: Vec<VertexId>,
    /// μ of each basis cylinder
    pub mu: Vec<f64>,
    pub matrix: Matrix,
}

/// Expands `Δ_s χ_v` for every height-`n` vertex: for each strict ancestor `w`,
/// with `c_w = weight(w)^{s−2} / Σ_{u≠u'} μ([u])μ([u'])` over ordered pairs of
/// children,
///
/// `Δ_s χ_v = −Σ_w c_w · 2(μ([w] ∖ [u_v]) χ_v − μ([v]) χ_{[w] ∖ [u_v]})`.
pub fn assemble(
    tree: &WeightedTree,
    mu: &CylinderMeasure,
    s: f64,
    n: u32,
) -> Result<LevelOperator> {
    if n > tree.depth_limit() {
        return Err(Error::InvalidParameter(format!(
            "level {n} is below the truncation height {}",
            tree.depth_limit()
        )));
    }
    if mu.values.len() != tree.len() {
        return Err(Error::InvalidParameter(
            "measure does not belong to this tree".into(),
        ));
    }
    for h in 0..n {
        if let Some(v) = tree.level(h).find(|&v| tree.is_leaf(v)) {
            return Err(Error::Unsupported(format!(
                "leaf {v} at height {h} above level {n}: the truncation is ragged"
            )));
        }
    }
    let top = tree.level(n).end as usize;
    if let Some(v) = (0..top as VertexId).find(|&v| !(mu.get(v) > 0.0)) {
        return Err(Error::ZeroMeasure(v));
    }
    // constants are only annihilated when the measure is additive
    if let Some(v) = (0..tree.level(n).start).find(|&v| {
        let kids: f64 = tree.children(v).map(|c| mu.get(c)).sum();
        (kids - mu.get(v)).abs() > 1e-9 * mu.get(v)
    }) {
        return Err(Error::InvalidParameter(format!(
            "measure is not additive at vertex {v}"
        )));
    }
    let basis: Vec<VertexId> = tree.level(n).collect();
    let first = tree.level(n).start;
    let dim = basis.len();
    let bmu: Vec<f64> = basis.iter().map(|&v| mu.get(v)).collect();
    if n == 0 {
        return Ok(LevelOperator {
            depth: 0,
            s,
            basis,
            mu: bmu,
            matrix: Matrix::zeros(1),
        });
    }

    // level-n descendants of each vertex form a contiguous basis range
    let mut range = vec![(0usize, 0usize); top];
    for v in (0..top as VertexId).rev() {
        range[v as usize] = if tree.height(v) == n {
            let i = (v - first) as usize;
            (i, i + 1)
        } else {
            let kids = tree.children(v);
            (range[kids.start as usize].0, range[kids.end as usize - 1].1)
        };
    }
    let coeff: Vec<f64> = (0..tree.level(n).start)
        .map(|w| {
            let kids: Vec<f64> = tree.children(w).map(|c| mu.get(c)).collect();
            let pairs: f64 = kids
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    a * kids
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, b)| b)
                        .sum::<f64>()
                })
                .sum();
            tree.weight(w).powf(s - 2.0) / pairs
        })
        .collect();
    let sqrt_mu: Vec<f64> = bmu.iter().map(|m| m.sqrt()).collect();

    let mut data = vec![0.0; dim * dim];
    data.par_chunks_mut(dim).enumerate().for_each(|(a, row)| {
        let mut u = basis[a];
        let mut diag = 0.0;
        while let Some(w) = tree.parent(u) {
            let c = 2.0 * coeff[w as usize];
            let (lo, hi) = range[w as usize];
            let (ulo, uhi) = range[u as usize];
            for b in (lo..ulo).chain(uhi..hi) {
                row[b] = c * sqrt_mu[a] * sqrt_mu[b];
            }
            let rest: f64 = tree
                .children(w)
                .filter(|&x| x != u)
                .map(|x| mu.get(x))
                .sum();
            diag += c * rest;
            u = w;
        }
        row[a] = -diag;
    });
    Ok(LevelOperator {
        depth: n,
        s,
        basis,
        mu: bmu,
        matrix: Matrix::from_row_major(dim, data),
    })
}

impl LevelOperator {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Entry of `Δ_s` acting on values of functions constant on the basis cylinders.
    pub fn raw_entry(&self, a: usize, b: usize) -> f64 {
        self.matrix.get(a, b) * (self.mu[b] / self.mu[a]).sqrt()
    }

    /// `M v` in orthonormal coordinates.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.matvec(v)
    }

    /// `(Δ_s f)_a = Σ_b raw(a, b)(f_b − f_a)` for cylinder values `f`; the
    /// difference form avoids cancellation against the diagonal.
    pub fn apply_generator(&self, f: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .into_par_iter()
            .map(|a| {
                (0..self.dim())
                    .filter(|&b| b != a)
                    .map(|b| self.raw_entry(a, b) * (f[b] - f[a]))
                    .sum()
            })
            .collect()
    }

    /// Orthonormal coordinates of a function given by its cylinder values.
    pub fn coordinates(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(&self.mu).map(|(x, m)| x * m.sqrt()).collect()
    }

    /// `vᵀ(−M)v` as the non-negative sum `½ Σ_{a≠b} M_ab √(μ_a μ_b)(f_a − f_b)²`
    /// with `f = v/√μ`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let f: Vec<f64> = v.iter().zip(&self.mu).map(|(x, m)| x / m.sqrt()).collect();
        let n = self.dim();
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|a| {
                let row = self.matrix.row(a);
                (0..n)
                    .filter(|&b| b != a)
                    .map(|b| row[b] * (self.mu[a] * self.mu[b]).sqrt() * (f[a] - f[b]).powi(2))
                    .sum::<f64>()
            })
            .collect();
        0.5 * crate::linalg::pairwise_sum(&rows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    NumericJacobi,
    ClosedFormTriadic,
}

/// Distinct eigenvalues of `−Δ_s`, ascending, with multiplicities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<u64>,
    pub source: SpectrumSource,
}

impl SpectrumTable {
    pub fn dimension(&self) -> u64 {
        self.multiplicities.iter().sum()
    }

    /// Expanded multiset, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(&l, &m)| std::iter::repeat_n(l, m as usize))
            .collect()
    }

    fn grouped(mut values: Vec<f64>, rel_tol: f64, source: SpectrumSource) -> Self {
        values.sort_by(f64::total_cmp);
        let mut eigenvalues: Vec<f64> = Vec::new();
        let mut multiplicities: Vec<u64> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        for x in values {
            match eigenvalues.last() {
                Some(&head) if (x - head).abs() <= rel_tol * x.abs().max(head.abs()) => {
                    *multiplicities.last_mut().expect("parallel vectors") += 1;
                    *sums.last_mut().expect("parallel vectors") += x;
                }
                _ => {
                    eigenvalues.push(x);
                    multiplicities.push(1);
                    sums.push(x);
                }
            }
        }
        let eigenvalues = sums
            .iter()
            .zip(&multiplicities)
            .map(|(s, &m)| s / m as f64)
            .collect();
        SpectrumTable {
            eigenvalues,
            multiplicities,
            source,
        }
    }
}

pub const GROUPING_TOL: f64 = 1e-8;

/// Eigenpairs of `−M`, ascending.
///
/// Jacobi eigenvalues lose relative accuracy for eigenvalues far below ‖M‖, so
/// every eigenvalue is recomputed as the Rayleigh quotient of its Jacobi
/// eigenvector in the sum-of-squares form of [`LevelOperator::quadratic_form`].
pub fn eigendecompose(op: &LevelOperator) -> Result<Eigen> {
    let norm = op.matrix.frobenius();
    let asym = op.matrix.max_asymmetry();
    if asym > 1e-13 * norm.max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    let mut neg = op.matrix.clone();
    neg.scale(-1.0);
    let e = jacobi_eigen(&neg);
    let floor = 1e-14 * norm;
    let mut pairs: Vec<(f64, Vec<f64>)> = e
        .vectors
        .into_par_iter()
        .map(|v| {
            let nrm: f64 = v.iter().map(|x| x * x).sum();
            let lam = op.quadratic_form(&v) / nrm;
            (if lam.abs() <= floor { 0.0 } else { lam }, v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (values, vectors) = pairs.into_iter().unzip();
    Ok(Eigen { values, vectors })
}

pub fn eigensolve(op: &LevelOperator) -> Result<SpectrumTable> {
    let e = eigendecompose(op)?;
    Ok(SpectrumTable::grouped(
        e.values,
        GROUPING_TOL,
        SpectrumSource::NumericJacobi,
    ))
}

/// Eigenvalues of `−Δ_s` on the triadic Cantor set up to level `n_max`:
/// `λ_0 = 0` and `λ_n = 2(1 + q + … + q^{n−2} + 2q^{n−1})`, `q = 3^{s0+2−s}`,
/// with multiplicity `2^{n−1}`.
pub fn closed_form_eigenvalues(s: f64, n_max: u32) -> Result<SpectrumTable> {
    if n_max > 30 {
        return Err(Error::InvalidParameter(format!("n_max {n_max} exceeds 30")));
    }
    let mut values = vec![(0.0, 1u64)];
    values.extend((1..=n_max).map(|n| (triadic_eigenvalue(s, n), 1u64 << (n - 1))));
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut table = SpectrumTable {
        eigenvalues: Vec::new(),
        multiplicities: Vec::new(),
        source: SpectrumSource::ClosedFormTriadic,
    };
    for (l, m) in values {
        match table.eigenvalues.last() {
            Some(&head) if (l - head).abs() <= GROUPING_TOL * l.abs().max(head.abs()) => {
                *table.multiplicities.last_mut().expect("parallel vectors") += m;
            }
            _ => {
                table.eigenvalues.push(l);
                table.multiplicities.push(m);
            }
        }
    }
    Ok(table)
}

/// `λ_n(s)` of the triadic Cantor set, `λ_0 = 0`.
pub fn triadic_eigenvalue(s: f64, n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let q = 3f64.powf(triadic_s0() + 2.0 - s);
    let geometric: f64 = (0..n - 1).map(|j| q.powi(j as i32)).sum();
    2.0 * (geometric + 2.0 * q.powi(n as i32 - 1))
}

pub fn triadic_s0() -> f64 {
    2f64.ln() / 3f64.ln()
}

/// A Haar function on the triadic tree, as its values on height-`depth` cylinders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HaarFunction {
    pub omega: Vec<u8>,
    pub depth: u32,
    pub values: Vec<f64>,
}

/// `φ_ω = Σ_v (−1)^{ω·v} χ_v` over binary words `v` of length `depth`, where
/// `ω·v` pairs the first |ω| symbols. `ω` is empty or ends in 1.
pub fn haar_function(omega: &[u8], depth: u32) -> Result<HaarFunction> {
    if omega.iter().any(|&b| b > 1) {
        return Err(Error::InvalidParameter("ω must be a binary word".into()));
    }
    if omega.last() == Some(&0) {
        return Err(Error::InvalidParameter("ω must end in 1".into()));
    }
    if omega.len() as u32 > depth {
        return Err(Error::InvalidParameter(format!(
            "|ω| = {} exceeds depth {depth}",
            omega.len()
        )));
    }
    if depth > 30 {
        return Err(Error::InvalidParameter("depth above 30".into()));
    }
    let values = (0..1usize << depth)
        .map(|a| {
            // symbol i of the word of `a` is bit (depth − 1 − i)
            let parity = omega
                .iter()
                .enumerate()
                .filter(|(i, &w)| w == 1 && (a >> (depth as usize - 1 - i)) & 1 == 1)
                .count();
            if parity % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok(HaarFunction {
        omega: omega.to_vec(),
        depth,
        values,
    })
}

/// All binary words of length at most `max_len` that are empty or end in 1.
pub fn haar_words(max_len: usize) -> Vec<Vec<u8>> {
    let mut words = vec![Vec::new()];
    for len in 1..=max_len {
        for bits in 0..1usize << (len - 1) {
            let mut w: Vec<u8> = (0..len - 1)
                .map(|i| ((bits >> (len - 2 - i)) & 1) as u8)
                .collect();
            w.push(1);
            words.push(w);
        }
    }
    words
}

/// `𝒩(λ)`: number of eigenvalues (with multiplicity) not above λ.
pub fn weyl_counting(spec: &SpectrumTable, lambda: f64) -> u64 {
    spec.eigenvalues
        .iter()
        .zip(&spec.multiplicities)
        .filter(|(&l, _)| l <= lambda * (1.0 + 1e-12))
        .map(|(_, &m)| m)
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylFit {
    pub exponent: f64,
    pub prefactor: f64,
}

/// Least-squares fit `log 𝒩(λ) = exponent·log λ + log prefactor` over the upper
/// half of the positive distinct eigenvalues.
pub fn weyl_fit(spec: &SpectrumTable) -> Result<WeylFit> {
    let positive: Vec<f64> = spec
        .eigenvalues
        .iter()
        .copied()
        .filter(|&l| l > 0.0)
        .collect();
    if positive.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "{} distinct positive eigenvalues; the fit needs 4",
            positive.len()
        )));
    }
    let top = &positive[positive.len() / 2..];
    let pts: Vec<(f64, f64)> = top
        .iter()
        .map(|&l| (l.ln(), (weyl_counting(spec, l) as f64).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let exponent = sxy / sxx;
    Ok(WeylFit {
        exponent,
        prefactor: (my - exponent * mx).exp(),
    })
}

/// Asymptotic `𝒩(λ) ∼ 2(λ/2k)^{s0/(2+s0−s)}` on the triadic set, with
/// `k = 1/(1 − 3^{s−2−s0}) + 1`. Only meaningful for `s < s0 + 2`.
pub fn triadic_weyl_law(s: f64) -> WeylFit {
    let s0 = triadic_s0();
    let exponent = s0 / (2.0 + s0 - s);
    let k = 1.0 / (1.0 - 3f64.powf(s - 2.0 - s0)) + 1.0;
    WeylFit {
        exponent,
        prefactor: 2.0 * (2.0 * k).powf(-exponent),
    }
}
