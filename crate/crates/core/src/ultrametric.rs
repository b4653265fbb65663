//! Boundary points, the tree ultrametric, the subdominant ultrametric of a
//! finite metric space and the isometric embedding into ℓ².

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{GeneratorTag, VertexId, WeightedTree};

/// A point of the boundary: an explicit prefix from the root, completed past
/// its last vertex by always descending to the first child.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundaryPath {
    prefix: Vec<VertexId>,
}

impl BoundaryPath {
    pub fn new(tree: &WeightedTree, prefix: Vec<VertexId>) -> Result<Self> {
        if prefix.first() != Some(&tree.root()) {
            return Err(Error::InvalidParameter(
                "a boundary path starts at the root".into(),
            ));
        }
        for pair in prefix.windows(2) {
            if (pair[1] as usize) >= tree.len() || tree.parent(pair[1]) != Some(pair[0]) {
                return Err(Error::InvalidParameter(format!(
                    "{} is not a child of {}",
                    pair[1], pair[0]
                )));
            }
        }
        Ok(BoundaryPath { prefix })
    }

    pub fn root(tree: &WeightedTree) -> Self {
        BoundaryPath {
            prefix: vec![tree.root()],
        }
    }

    /// The path through vertex `v` (then leftmost below it).
    pub fn through(tree: &WeightedTree, v: VertexId) -> Self {
        BoundaryPath {
            prefix: tree.path_to(v),
        }
    }

    /// Follows child indices from the root; digits past a leaf are an error.
    pub fn from_word(tree: &WeightedTree, word: &[usize]) -> Result<Self> {
        let mut prefix = Vec::with_capacity(word.len() + 1);
        let mut v = tree.root();
        prefix.push(v);
        for &i in word {
            v = tree
                .child(v, i)
                .ok_or_else(|| Error::InvalidParameter(format!("vertex {v} has no child {i}")))?;
            prefix.push(v);
        }
        Ok(BoundaryPath { prefix })
    }

    pub fn prefix(&self) -> &[VertexId] {
        &self.prefix
    }

    /// Root-to-leaf vertex sequence inside the truncation.
    pub fn resolve(&self, tree: &WeightedTree) -> Vec<VertexId> {
        let mut path = self.prefix.clone();
        let mut v = *path.last().expect("prefix is never empty");
        while !tree.is_leaf(v) {
            v = tree.children(v).start;
            path.push(v);
        }
        path
    }

    pub fn leaf(&self, tree: &WeightedTree) -> VertexId {
        tree.leftmost_leaf(*self.prefix.last().expect("prefix is never empty"))
    }

    /// Vertex of the resolved path at height `h`, if the truncation reaches it.
    pub fn vertex_at(&self, tree: &WeightedTree, h: u32) -> Option<VertexId> {
        tree.ancestor_at(self.leaf(tree), h)
    }

    /// Child-index word of the resolved path.
    pub fn word(&self, tree: &WeightedTree) -> Vec<usize> {
        self.resolve(tree)[1..]
            .iter()
            .map(|&v| tree.child_index(v))
            .collect()
    }

    pub fn equivalent(&self, tree: &WeightedTree, other: &BoundaryPath) -> bool {
        self.leaf(tree) == other.leaf(tree)
    }
}

/// Deepest common vertex of two distinct boundary points.
pub fn lcp(tree: &WeightedTree, x: &BoundaryPath, y: &BoundaryPath) -> Result<VertexId> {
    let (mut a, mut b) = (x.leaf(tree), y.leaf(tree));
    if a == b {
        return Err(Error::SingletonPrefix);
    }
    while tree.height(a) > tree.height(b) {
        a = tree.parent(a).expect("non-root has a parent");
    }
    while tree.height(b) > tree.height(a) {
        b = tree.parent(b).expect("non-root has a parent");
    }
    while a != b {
        a = tree.parent(a).expect("non-root has a parent");
        b = tree.parent(b).expect("non-root has a parent");
    }
    Ok(a)
}

pub fn distance(tree: &WeightedTree, x: &BoundaryPath, y: &BoundaryPath) -> f64 {
    match lcp(tree, x, y) {
        Ok(v) => tree.weight(v),
        Err(_) => 0.0,
    }
}

/// Finite part of the ℓ² image of a boundary point. Coordinate `n` lives on the
/// vertex `v_{n+1}` of the resolved path; everything past the leaf is summarized
/// by its squared norm, which is exactly `weight(leaf)²/2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Vec<(VertexId, f64)>,
    pub tail_norm_sq: f64,
}

impl Embedding {
    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|(_, c)| c * c).sum()
    }
}

pub fn embed(tree: &WeightedTree, x: &BoundaryPath) -> Embedding {
    let path = x.resolve(tree);
    let coords = path
        .windows(2)
        .map(|p| {
            let (hi, lo) = (tree.weight(p[0]), tree.weight(p[1]));
            (p[1], ((hi * hi - lo * lo) / 2.0).sqrt())
        })
        .collect();
    let leaf = tree.weight(*path.last().expect("resolved path is never empty"));
    Embedding {
        coords,
        tail_norm_sq: leaf * leaf / 2.0,
    }
}

/// ‖Φ(x) − Φ(y)‖ over the explicit coordinates (tails ignored).
pub fn embedding_distance(a: &Embedding, b: &Embedding) -> f64 {
    // both coordinate lists follow root-to-leaf order, so shared vertices form a common prefix
    let shared = a
        .coords
        .iter()
        .zip(&b.coords)
        .take_while(|(p, q)| p.0 == q.0)
        .count();
    let mut sum = 0.0;
    for (p, q) in a.coords[..shared].iter().zip(&b.coords[..shared]) {
        sum += (p.1 - q.1) * (p.1 - q.1);
    }
    for (_, c) in a.coords[shared..].iter().chain(&b.coords[shared..]) {
        sum += c * c;
    }
    sum.sqrt()
}

/// A finite metric space given by its distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMetric {
    n: usize,
    dist: Vec<f64>,
}

impl FiniteMetric {
    /// Checks symmetry, zero diagonal, distinct points and the triangle inequality
    /// (each up to a relative slack of 1e-12).
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMetric("matrix is not square".into()));
        }
        let dist: Vec<f64> = rows.into_iter().flatten().collect();
        let m = FiniteMetric { n, dist };
        let scale = m.dist.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let slack = 1e-12 * scale;
        for i in 0..n {
            if m.get(i, i) != 0.0 {
                return Err(Error::InvalidMetric(format!("d({i},{i}) is not zero")));
            }
            for j in 0..n {
                let d = m.get(i, j);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) = {d}")));
                }
                if (d - m.get(j, i)).abs() > slack {
                    return Err(Error::InvalidMetric(format!("d({i},{j}) != d({j},{i})")));
                }
                if i != j && d == 0.0 {
                    return Err(Error::InvalidMetric(format!("points {i} and {j} coincide")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if m.get(i, k) > m.get(i, j) + m.get(j, k) + slack {
                        return Err(Error::InvalidMetric(format!(
                            "triangle inequality fails for ({i}, {j}, {k})"
                        )));
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.dist
            .chunks(self.n.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn is_ultrametric(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| {
            (0..n).all(|j| (0..n).all(|k| self.get(i, k) <= self.get(i, j).max(self.get(j, k))))
        })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::InvalidMetric(format!("bad entry {f:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for row in self.rows() {
            wtr.write_record(row.iter().map(|d| format!("{d:e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dendrogram {
    pub tree: WeightedTree,
    pub delta: FiniteMetric,
    /// Leaf vertex of each input point.
    pub leaf_of: Vec<VertexId>,
}

/// The largest ultrametric below `m`, i.e. single-linkage clustering.
///
/// `δ(x, y)` is the largest edge on the minimum-spanning-tree path from `x` to
/// `y`. Merges at equal thresholds share one vertex. Leaves carry half of
/// their parent's weight; no distance ever reads a leaf weight.
pub fn subdominant_ultrametric(m: &FiniteMetric) -> Result<Dendrogram> {
    let n = m.size();
    if n < 2 {
        return Err(Error::InvalidMetric("need at least two points".into()));
    }

    // Prim, ties broken by the smaller index
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut link = vec![0usize; n];
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(n - 1);
    best[0] = 0.0;
    for step in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (u == usize::MAX || best[v] < best[u]) {
                u = v;
            }
        }
        in_tree[u] = true;
        if step > 0 {
            edges.push((best[u], link[u].min(u), link[u].max(u)));
        }
        for v in 0..n {
            if !in_tree[v] && m.get(u, v) < best[v] {
                best[v] = m.get(u, v);
                link[v] = u;
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // Kruskal pass over the MST edges builds the hierarchy
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut weights = vec![0.0; n];
    let mut uf: Vec<usize> = (0..n).collect();
    let mut node_of: Vec<usize> = (0..n).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut delta = vec![vec![0.0; n]; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &(w, a, b) in &edges {
        let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
        for &i in &members[ra] {
            for &j in &members[rb] {
                delta[i][j] = w;
                delta[j][i] = w;
            }
        }
        let (na, nb) = (node_of[ra], node_of[rb]);
        let fresh = |x: usize| x >= n && weights[x] == w;
        let node = match (fresh(na), fresh(nb)) {
            (true, true) => {
                let moved = std::mem::take(&mut children[nb]);
                children[na].extend(moved);
                na
            }
            (true, false) => {
                children[na].push(nb);
                na
            }
            (false, true) => {
                children[nb].push(na);
                nb
            }
            (false, false) => {
                children.push(vec![na, nb]);
                weights.push(w);
                children.len() - 1
            }
        };
        uf[rb] = ra;
        let moved = std::mem::take(&mut members[rb]);
        members[ra].extend(moved);
        node_of[ra] = node;
    }
    let root = node_of[find(&mut uf, 0)];
    // absorbed merge vertices are left childless; drop them before building
    let keep: Vec<usize> = (0..children.len())
        .filter(|&v| v < n || !children[v].is_empty())
        .collect();
    let mut remap = vec![usize::MAX; children.len()];
    for (i, &v) in keep.iter().enumerate() {
        remap[v] = i;
    }
    let children: Vec<Vec<usize>> = keep
        .iter()
        .map(|&v| children[v].iter().map(|&c| remap[c]).collect())
        .collect();
    let mut weights: Vec<f64> = keep.iter().map(|&v| weights[v]).collect();
    let root = remap[root];
    for v in n..children.len() {
        for &c in &children[v] {
            if c < n {
                weights[c] = weights[v] / 2.0;
            }
        }
    }
    let (tree, ids) =
        WeightedTree::from_adjacency(&children, &weights, root, GeneratorTag::Explicit)
            .expect("single linkage always yields a tree");
    let leaf_of = ids[..n].to_vec();
    let delta = FiniteMetric {
        n,
        dist: delta.into_iter().flatten().collect(),
    };
    Ok(Dendrogram {
        tree,
        delta,
        leaf_of,
    })
}
