//! Dirac data of a weighted tree: spectrum, ζ-function and its abscissa, box
//! dimension, the canonical measure and choice functions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::tree::{GeneratorTag, VertexId, WeightedTree};
use crate::ultrametric::{lcp, BoundaryPath};

/// Number of deepest distinct diameters used by the slope estimators.
pub const ESTIMATOR_WINDOW: usize = 10;

const SAME_DIAMETER: f64 = 1e-12;

/// Eigenvalues `±1/weight(v)` of the Dirac operator, ascending, with the number
/// of vertices carrying that weight.
pub fn dirac_spectrum(tree: &WeightedTree) -> Vec<(f64, u64)> {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &w in tree.weights() {
        *counts.entry(w.to_bits()).or_default() += 1;
    }
    let mut out: Vec<(f64, u64)> = counts
        .into_iter()
        .flat_map(|(bits, c)| {
            let w = f64::from_bits(bits);
            [(-1.0 / w, c), (1.0 / w, c)]
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Root of `Σ r_i^s = 1`, by bisection to full precision.
pub fn moran_root(ratios: &[f64]) -> Result<f64> {
    if ratios.len() < 2
        || ratios
            .iter()
            .any(|r| !(r.is_finite() && *r > 0.0 && *r < 1.0))
    {
        return Err(Error::InvalidParameter(
            "the Moran equation needs at least two ratios in (0, 1)".into(),
        ));
    }
    let g = |s: f64| ratios.iter().map(|r| r.powf(s)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Vertices grouped by weight and parent weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexClass {
    pub weight: f64,
    pub parent_weight: Option<f64>,
    pub count: f64,
}

/// The weight statistics of a truncated tree: enough for the ζ abscissa
/// estimator and box counting without holding the tree itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightClasses {
    pub classes: Vec<VertexClass>,
    /// Largest leaf weight. Every vertex at least this heavy is inside the truncation.
    pub complete_threshold: f64,
    pub depth: u32,
}

impl WeightClasses {
    pub fn from_tree(tree: &WeightedTree) -> Self {
        if tree.generator_tag().is_self_similar() {
            return Self::generated(tree.generator_tag(), tree.weight(0), tree.depth_limit())
                .expect("a constructed tree has a valid generator");
        }
        let mut map: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        for v in 0..tree.len() as VertexId {
            let p = tree
                .parent(v)
                .map_or(u64::MAX, |p| tree.weight(p).to_bits());
            *map.entry((tree.weight(v).to_bits(), p)).or_default() += 1.0;
        }
        let classes = map
            .into_iter()
            .map(|((w, p), count)| VertexClass {
                weight: f64::from_bits(w),
                parent_weight: (p != u64::MAX).then(|| f64::from_bits(p)),
                count,
            })
            .collect();
        let complete_threshold = tree.leaves().map(|v| tree.weight(v)).fold(0.0, f64::max);
        WeightClasses {
            classes,
            complete_threshold,
            depth: tree.depth_limit(),
        }
    }

    /// Classes of a self-similar tree truncated at `depth`, computed over
    /// compositions of the ratio multiset instead of individual vertices.
    pub fn generated(tag: &GeneratorTag, root_weight: f64, depth: u32) -> Result<Self> {
        let ratios = tag
            .child_ratios()
            .ok_or_else(|| Error::Unsupported("explicit trees have no generator".into()))?;
        // distinct ratio values with their multiplicity
        let mut groups: Vec<(f64, f64)> = Vec::new();
        for r in ratios {
            match groups.iter_mut().find(|g| g.0 == r) {
                Some(g) => g.1 += 1.0,
                None => groups.push((r, 1.0)),
            }
        }
        let k = groups.len();
        let weight_of = |c: &[u32]| -> f64 {
            groups
                .iter()
                .zip(c)
                .fold(root_weight, |w, (g, &e)| w * g.0.powi(e as i32))
        };
        let mut classes = vec![VertexClass {
            weight: root_weight,
            parent_weight: None,
            count: 1.0,
        }];
        // composition -> number of vertices with that composition
        let mut level: BTreeMap<Vec<u32>, f64> = BTreeMap::from([(vec![0; k], 1.0)]);
        for _ in 0..depth {
            let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            for (c, &count) in &level {
                let pw = weight_of(c);
                for (j, g) in groups.iter().enumerate() {
                    let mut child = c.clone();
                    child[j] += 1;
                    classes.push(VertexClass {
                        weight: weight_of(&child),
                        parent_weight: Some(pw),
                        count: count * g.1,
                    });
                    *next.entry(child).or_default() += count * g.1;
                }
            }
            level = next;
        }
        let complete_threshold = level.keys().map(|c| weight_of(c)).fold(0.0, f64::max);
        Ok(WeightClasses {
            classes,
            complete_threshold,
            depth,
        })
    }

    /// Distinct diameters λ_1 > λ_2 > … inside the complete range, with multiplicities.
    pub fn diameters(&self) -> Vec<(f64, f64)> {
        let mut ws: Vec<(f64, f64)> = self
            .classes
            .iter()
            .filter(|c| c.weight >= self.complete_threshold * (1.0 - SAME_DIAMETER))
            .map(|c| (c.weight, c.count))
            .collect();
        ws.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (w, c) in ws {
            match out.last_mut() {
                Some(last) if last.0 - w <= SAME_DIAMETER * last.0 => last.1 += c,
                _ => out.push((w, c)),
            }
        }
        out
    }

    /// Size of the minimal cover by cylinders of diameter at most `delta`.
    pub fn cover_count(&self, delta: f64) -> f64 {
        let cut = delta * (1.0 + SAME_DIAMETER);
        self.classes
            .iter()
            .filter(|c| c.weight <= cut && c.parent_weight.is_none_or(|p| p > cut))
            .map(|c| c.count)
            .sum()
    }
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Indices of the sample diameters, one per each of `ESTIMATOR_WINDOW` equal
/// log-width bins over the deepest three quarters (in log scale) of the
/// complete range: in each bin, the diameter just above the widest gap, i.e.
/// the bottom of the bin's largest step of the counting function.
///
/// The deepest few distinct diameters alone work for lattice ratio sets but not
/// for non-lattice ones, whose deepest diameters crowd into a sliver of scale.
/// Sampling at step bottoms keeps near-lattice sets (ratios almost equal, whose
/// counts are still staircases at moderate depth) from picking up a phase bias.
fn window(diameters: &[(f64, f64)]) -> Result<Vec<usize>> {
    let len = diameters.len();
    if len < 3 {
        return Err(Error::InvalidParameter(format!(
            "only {len} complete distinct diameters; the estimators need at least 3"
        )));
    }
    let x: Vec<f64> = diameters.iter().map(|d| -d.0.ln()).collect();
    let start = x[0] + 0.25 * (x[len - 1] - x[0]);
    let width = (x[len - 1] - start) / ESTIMATOR_WINDOW as f64;
    let gap = |i: usize| if i + 1 < len { x[i + 1] - x[i] } else { 0.0 };
    // (bin, index of the widest gap so far)
    let mut picked: Vec<(usize, usize)> = Vec::with_capacity(ESTIMATOR_WINDOW);
    for i in 0..len {
        if x[i] < start {
            continue;
        }
        let bin = (((x[i] - start) / width) as usize).min(ESTIMATOR_WINDOW - 1);
        match picked.last_mut() {
            Some((b, best)) if *b == bin => {
                if gap(i) >= gap(*best) {
                    *best = i;
                }
            }
            _ => picked.push((bin, i)),
        }
    }
    if picked.len() < 3 {
        // too few distinct scales for binning: use every diameter
        return Ok((0..len).collect());
    }
    Ok(picked.into_iter().map(|p| p.1).collect())
}

/// Least-squares slope of log(Σ_{j≤k} a_j) against −log λ_k over sample
/// diameters spread over the deeper part of the complete range.
pub fn abscissa_estimate(classes: &WeightClasses) -> Result<f64> {
    let d = classes.diameters();
    let idx = window(&d)?;
    let mut cum = 0.0;
    let mut pts = Vec::with_capacity(d.len());
    for &(w, a) in &d {
        cum += a;
        pts.push((-w.ln(), cum.ln()));
    }
    Ok(slope(&idx.iter().map(|&i| pts[i]).collect::<Vec<_>>()))
}

/// Slope of log N_δ against −log δ at the same sample diameters.
pub fn box_dimension_estimate(classes: &WeightClasses) -> Result<f64> {
    let d = classes.diameters();
    let pts: Vec<(f64, f64)> = window(&d)?
        .into_iter()
        .map(|i| (-d[i].0.ln(), classes.cover_count(d[i].0).ln()))
        .collect();
    Ok(slope(&pts))
}

pub fn box_dimension(tree: &WeightedTree) -> Result<f64> {
    box_dimension_estimate(&WeightClasses::from_tree(tree))
}

/// Abscissa of convergence of ζ: the Moran root for self-similar trees, the
/// cumulative-multiplicity estimate otherwise.
pub fn abscissa(tree: &WeightedTree) -> Result<f64> {
    match tree.generator_tag().child_ratios() {
        Some(r) => moran_root(&r),
        None => abscissa_estimate(&WeightClasses::from_tree(tree)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaValue {
    pub value: f64,
    /// Σ weight^s over the deepest level when no exact tail is known.
    pub last_level_magnitude: Option<f64>,
}

/// `ζ(s) = Σ_v weight(v)^s` (the ½Tr|D|^{-s} normalization).
pub fn zeta(tree: &WeightedTree, s: f64) -> Result<ZetaValue> {
    let s0 = abscissa(tree)?;
    // the abscissa itself is only known to about 1e-12
    if !(s > s0 + 1e-12) {
        return Err(Error::Divergent { s, abscissa: s0 });
    }
    let truncated = pairwise_sum_by(tree.len(), |v| tree.weight(v as VertexId).powf(s));
    match tree.generator_tag().child_ratios() {
        Some(ratios) => {
            let g: f64 = ratios.iter().map(|r| r.powf(s)).sum();
            let leaves = pairwise_sum_by(tree.len(), |v| {
                let v = v as VertexId;
                if tree.is_leaf(v) {
                    tree.weight(v).powf(s)
                } else {
                    0.0
                }
            });
            Ok(ZetaValue {
                value: truncated + leaves * g / (1.0 - g),
                last_level_magnitude: None,
            })
        }
        None => {
            let last = tree
                .level(tree.depth_limit())
                .map(|v| tree.weight(v).powf(s))
                .sum();
            Ok(ZetaValue {
                value: truncated,
                last_level_magnitude: Some(last),
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbscissaEstimator {
    CumulativeMultiplicity,
    MoranExact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaProfile {
    pub s: Vec<f64>,
    pub values: Vec<f64>,
    pub abscissa_estimate: f64,
    pub estimator: AbscissaEstimator,
}

pub fn zeta_profile(tree: &WeightedTree, s: &[f64]) -> Result<ZetaProfile> {
    let values = s
        .par_iter()
        .map(|&s| zeta(tree, s).map(|z| z.value))
        .collect::<Result<Vec<f64>>>()?;
    let estimator = if tree.generator_tag().is_self_similar() {
        AbscissaEstimator::MoranExact
    } else {
        AbscissaEstimator::CumulativeMultiplicity
    };
    Ok(ZetaProfile {
        s: s.to_vec(),
        values,
        abscissa_estimate: abscissa(tree)?,
        estimator,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureMethod {
    SelfSimilarClosedForm,
    RatioExtrapolation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    pub s0: f64,
    /// max over vertices of the last two diagonal Richardson estimates' difference
    pub stability: f64,
    pub reliable: bool,
}

/// μ([v]) for every vertex, indexed by vertex id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderMeasure {
    pub values: Vec<f64>,
    pub method: MeasureMethod,
    pub extrapolation: Option<ExtrapolationReport>,
}

impl CylinderMeasure {
    pub fn get(&self, v: VertexId) -> f64 {
        self.values[v as usize]
    }

    /// max_v |μ([v]) − Σ_children μ([c])|
    pub fn additivity_drift(&self, tree: &WeightedTree) -> f64 {
        (0..tree.len() as VertexId)
            .filter(|&v| !tree.is_leaf(v))
            .map(|v| (self.get(v) - tree.children(v).map(|c| self.get(c)).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    /// Descends from `v` choosing children with probability proportional to μ.
    pub fn descend<R: Rng + ?Sized>(
        &self,
        tree: &WeightedTree,
        v: VertexId,
        rng: &mut R,
    ) -> VertexId {
        let mut v = v;
        while !tree.is_leaf(v) {
            let mut u = rng.random::<f64>() * self.get(v);
            let kids = tree.children(v);
            let last = kids.end - 1;
            v = last;
            for c in kids {
                u -= self.get(c);
                if u < 0.0 {
                    v = c;
                    break;
                }
            }
        }
        v
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, tree: &WeightedTree, rng: &mut R) -> BoundaryPath {
        BoundaryPath::through(tree, self.descend(tree, tree.root(), rng))
    }

    pub fn check_support(&self, tree: &WeightedTree) -> Result<()> {
        match (0..tree.len() as VertexId).find(|&v| !(self.get(v) > 0.0)) {
            Some(v) => Err(Error::ZeroMeasure(v)),
            None => Ok(()),
        }
    }
}

/// The canonical measure: closed form `weight^{s0}` on self-similar trees,
/// ratio extrapolation at the estimated abscissa otherwise.
pub fn measure(tree: &WeightedTree) -> Result<CylinderMeasure> {
    match tree.generator_tag().child_ratios() {
        Some(ratios) => {
            let s0 = moran_root(&ratios)?;
            let mut p: Vec<f64> = ratios.iter().map(|r| r.powf(s0)).collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= total);
            let mut values = vec![0.0; tree.len()];
            values[0] = 1.0;
            for v in 0..tree.len() as VertexId {
                for (c, pi) in tree.children(v).zip(&p) {
                    values[c as usize] = values[v as usize] * pi;
                }
            }
            Ok(CylinderMeasure {
                values,
                method: MeasureMethod::SelfSimilarClosedForm,
                extrapolation: None,
            })
        }
        None => {
            // ζ with the level-growth tail diverges exactly at its growth root;
            // extrapolating to any other point leaves the vertices' own terms in
            // the limit and the result is not additive
            let s0 = match tail_growth_root(tree) {
                Some(s0) => s0,
                None => abscissa(tree)?,
            };
            measure_by_extrapolation(tree, s0)
        }
    }
}

/// The `s` at which the last two level sums of `weight^s` are equal.
fn tail_growth_root(tree: &WeightedTree) -> Option<f64> {
    let depth = tree.depth_limit();
    if depth < 2 || !tree.is_level_truncated() {
        return None;
    }
    let level_sum = |h, s: f64| tree.level(h).map(|v| tree.weight(v).powf(s)).sum::<f64>();
    let f = |s: f64| level_sum(depth, s).ln() - level_sum(depth - 1, s).ln();
    let (mut lo, mut hi) = (0.0, 64.0);
    if f(lo) <= 0.0 || f(hi) >= 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

const EXTRAPOLATION_ANCHOR: f64 = 0.01;
const EXTRAPOLATION_STEPS: usize = 7;
const EXTRAPOLATION_TOL: f64 = 1e-6;

/// Richardson extrapolation of `ζ_v(s)/ζ(s)` to `s ↓ s0` from `s0 + 0.01·2^{-k}`, k = 0..6.
///
/// ζ_v sums `weight^s` over the subtree of `v` plus a per-leaf geometric tail:
/// exact for self-similar trees, with the growth factor of the last two levels
/// for explicit ones.
pub fn measure_by_extrapolation(tree: &WeightedTree, s0: f64) -> Result<CylinderMeasure> {
    if !tree.is_level_truncated() {
        return Err(Error::Unsupported(
            "ratio extrapolation needs every leaf at the truncation height".into(),
        ));
    }
    let n = tree.len();
    let ratios = tree.generator_tag().child_ratios();
    let depth = tree.depth_limit();
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(EXTRAPOLATION_STEPS);
    for k in 0..EXTRAPOLATION_STEPS {
        let s = s0 + EXTRAPOLATION_ANCHOR * 0.5f64.powi(k as i32);
        let growth = match &ratios {
            Some(r) => r.iter().map(|r| r.powf(s)).sum::<f64>(),
            None => {
                if depth < 2 {
                    return Err(Error::Unsupported(
                        "tail estimation needs at least two levels".into(),
                    ));
                }
                let level_sum = |h| tree.level(h).map(|v| tree.weight(v).powf(s)).sum::<f64>();
                level_sum(depth) / level_sum(depth - 1)
            }
        };
        if !(growth < 1.0) {
            return Err(Error::Divergent { s, abscissa: s0 });
        }
        let tail = 1.0 + growth / (1.0 - growth);
        let mut z: Vec<f64> = tree.weights().iter().map(|w| w.powf(s)).collect();
        for v in (0..n as VertexId).rev() {
            if tree.is_leaf(v) {
                z[v as usize] *= tail;
            } else {
                z[v as usize] += tree.children(v).map(|c| z[c as usize]).sum::<f64>();
            }
        }
        let total = z[0];
        z.iter_mut().for_each(|x| *x /= total);
        table.push(z);
    }
    let (values, diffs): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut r: Vec<f64> = table.iter().map(|row| row[v]).collect();
            let mut prev_diag = r[0];
            let mut diag = r[0];
            // in-place Neville tableau: after pass j, r[k] holds R[k][j]
            for j in 1..EXTRAPOLATION_STEPS {
                let f = 2f64.powi(j as i32) - 1.0;
                for k in (j..EXTRAPOLATION_STEPS).rev() {
                    r[k] += (r[k] - r[k - 1]) / f;
                }
                prev_diag = diag;
                diag = r[j];
            }
            (diag, (diag - prev_diag).abs())
        })
        .unzip();
    let stability = diffs.into_iter().fold(0.0, f64::max);
    Ok(CylinderMeasure {
        values,
        method: MeasureMethod::RatioExtrapolation,
        extrapolation: Some(ExtrapolationReport {
            s0,
            stability,
            reliable: stability <= EXTRAPOLATION_TOL,
        }),
    })
}

/// A choice function: for each non-leaf vertex, two boundary points through
/// distinct children.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceFunction {
    pub pairs: Vec<Option<(BoundaryPath, BoundaryPath)>>,
}

/// Samples `τ(v)`: an ordered pair of distinct children with probability
/// ∝ μ μ, then a μ-random point in each.
pub fn random_choice(
    tree: &WeightedTree,
    mu: &CylinderMeasure,
    seed: u64,
) -> Result<ChoiceFunction> {
    mu.check_support(tree)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(tree.len());
    for v in 0..tree.len() as VertexId {
        if tree.is_leaf(v) {
            pairs.push(None);
            continue;
        }
        let kids: Vec<VertexId> = tree.children(v).collect();
        let mut cells = Vec::with_capacity(kids.len() * (kids.len() - 1));
        for &a in &kids {
            for &b in &kids {
                if a != b {
                    cells.push((a, b, mu.get(a) * mu.get(b)));
                }
            }
        }
        let total: f64 = cells.iter().map(|c| c.2).sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = cells[cells.len() - 1];
        for &c in &cells {
            u -= c.2;
            if u < 0.0 {
                pick = c;
                break;
            }
        }
        let x = BoundaryPath::through(tree, mu.descend(tree, pick.0, &mut rng));
        let y = BoundaryPath::through(tree, mu.descend(tree, pick.1, &mut rng));
        pairs.push(Some((x, y)));
    }
    Ok(ChoiceFunction { pairs })
}

/// Leftmost points through the first two children everywhere, except at
/// `x ∧ y` where the pair is `(x, y)` itself.
pub fn witness_choice(
    tree: &WeightedTree,
    x: &BoundaryPath,
    y: &BoundaryPath,
) -> Result<ChoiceFunction> {
    let meet = lcp(tree, x, y)?;
    let pairs = (0..tree.len() as VertexId)
        .map(|v| {
            if v == meet {
                return Some((x.clone(), y.clone()));
            }
            let mut kids = tree.children(v);
            match (kids.next(), kids.next()) {
                (Some(a), Some(b)) => Some((
                    BoundaryPath::through(tree, a),
                    BoundaryPath::through(tree, b),
                )),
                _ => None,
            }
        })
        .collect();
    Ok(ChoiceFunction { pairs })
}

/// `sup_v |f(τ₊(v)) − f(τ₋(v))| / weight(v)` over the truncation.
pub fn commutator_norm<F>(tree: &WeightedTree, f: F, tau: &ChoiceFunction) -> f64
where
    F: Fn(&BoundaryPath) -> f64 + Sync,
{
    tau.pairs
        .par_iter()
        .enumerate()
        .filter_map(|(v, p)| {
            p.as_ref()
                .map(|(a, b)| (f(a) - f(b)).abs() / tree.weight(v as VertexId))
        })
        .reduce(|| 0.0, f64::max)
}

fn pairwise_sum_by(n: usize, f: impl Fn(usize) -> f64 + Send + Sync) -> f64 {
    let terms: Vec<f64> = (0..n).into_par_iter().map(f).collect();
    pairwise_sum(&terms)
}
