//! Weighted rooted trees (Michon trees) truncated at a finite height.
//!
//! Vertices are stored in breadth-first order with the root at id 0, so the
//! children of a vertex and the vertices of a level are contiguous id ranges.
//! A vertex weight is the diameter of its boundary cylinder.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type VertexId = u32;

const NO_PARENT: VertexId = VertexId::MAX;

/// Upper bound on materialized vertices; deeper self-similar trees are handled
/// through [`crate::spectral::WeightClasses`] without materialization.
pub const MAX_VERTICES: usize = 1 << 27;

/// How the levels below the truncation continue.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorTag {
    Uniform { branching: u32, ratio: f64 },
    Ifs { ratios: Vec<f64> },
    Explicit,
}

impl GeneratorTag {
    /// Per-child contraction ratios, in child order, for self-similar tags.
    pub fn child_ratios(&self) -> Option<Vec<f64>> {
        match self {
            GeneratorTag::Uniform { branching, ratio } => Some(vec![*ratio; *branching as usize]),
            GeneratorTag::Ifs { ratios } => Some(ratios.clone()),
            GeneratorTag::Explicit => None,
        }
    }

    pub fn is_self_similar(&self) -> bool {
        !matches!(self, GeneratorTag::Explicit)
    }

    fn check(&self) -> Result<()> {
        let in_unit = |r: f64| r.is_finite() && r > 0.0 && r < 1.0;
        match self {
            GeneratorTag::Uniform { branching, ratio } => {
                if *branching < 2 {
                    return Err(Error::InvalidParameter(format!(
                        "branching {branching} < 2: boundary would not be a Cantor set"
                    )));
                }
                if !in_unit(*ratio) {
                    return Err(Error::InvalidParameter(format!(
                        "ratio {ratio} must lie in (0, 1)"
                    )));
                }
            }
            GeneratorTag::Ifs { ratios } => {
                if ratios.len() < 2 {
                    return Err(Error::InvalidParameter(
                        "an IFS tree needs at least two ratios: a single map has a point attractor"
                            .into(),
                    ));
                }
                if let Some(r) = ratios.iter().find(|r| !in_unit(**r)) {
                    return Err(Error::InvalidParameter(format!(
                        "ratio {r} must lie in (0, 1)"
                    )));
                }
            }
            GeneratorTag::Explicit => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedTree {
    parent: Vec<VertexId>,
    weight: Vec<f64>,
    height: Vec<u32>,
    first_child: Vec<VertexId>,
    child_count: Vec<u32>,
    level_start: Vec<VertexId>,
    depth_limit: u32,
    tag: GeneratorTag,
}

impl WeightedTree {
    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    pub fn root(&self) -> VertexId {
        0
    }

    pub fn weight(&self, v: VertexId) -> f64 {
        self.weight[v as usize]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn parent(&self, v: VertexId) -> Option<VertexId> {
        match self.parent[v as usize] {
            NO_PARENT => None,
            p => Some(p),
        }
    }

    pub fn height(&self, v: VertexId) -> u32 {
        self.height[v as usize]
    }

    pub fn children(&self, v: VertexId) -> Range<VertexId> {
        let first = self.first_child[v as usize];
        first..first + self.child_count[v as usize]
    }

    pub fn child_count(&self, v: VertexId) -> usize {
        self.child_count[v as usize] as usize
    }

    pub fn child(&self, v: VertexId, index: usize) -> Option<VertexId> {
        (index < self.child_count(v)).then(|| self.first_child[v as usize] + index as VertexId)
    }

    /// Position of `v` among its siblings (0 for the root).
    pub fn child_index(&self, v: VertexId) -> usize {
        match self.parent(v) {
            Some(p) => (v - self.first_child[p as usize]) as usize,
            None => 0,
        }
    }

    pub fn is_leaf(&self, v: VertexId) -> bool {
        self.child_count[v as usize] == 0
    }

    pub fn depth_limit(&self) -> u32 {
        self.depth_limit
    }

    pub fn generator_tag(&self) -> &GeneratorTag {
        &self.tag
    }

    /// Vertices at height `h`, contiguous in breadth-first order.
    pub fn level(&self, h: u32) -> Range<VertexId> {
        let h = h as usize;
        if h + 1 >= self.level_start.len() {
            let end = self.len() as VertexId;
            return end..end;
        }
        self.level_start[h]..self.level_start[h + 1]
    }

    pub fn leaves(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.len() as VertexId).filter(|&v| self.is_leaf(v))
    }

    /// True when every leaf sits at the truncation height.
    pub fn is_level_truncated(&self) -> bool {
        self.leaves().all(|v| self.height(v) == self.depth_limit)
    }

    /// Vertices from the root down to `v`, inclusive.
    pub fn path_to(&self, v: VertexId) -> Vec<VertexId> {
        let mut path = Vec::with_capacity(self.height(v) as usize + 1);
        let mut cur = Some(v);
        while let Some(u) = cur {
            path.push(u);
            cur = self.parent(u);
        }
        path.reverse();
        path
    }

    /// Ancestor of `v` at height `h` (`v` itself when `h == height(v)`).
    pub fn ancestor_at(&self, v: VertexId, h: u32) -> Option<VertexId> {
        if h > self.height(v) {
            return None;
        }
        let mut u = v;
        while self.height(u) > h {
            u = self.parent[u as usize];
        }
        Some(u)
    }

    /// Leftmost-descent leaf below `v`.
    pub fn leftmost_leaf(&self, v: VertexId) -> VertexId {
        let mut u = v;
        while !self.is_leaf(u) {
            u = self.first_child[u as usize];
        }
        u
    }

    /// Builds a tree from an arbitrary child-list representation, renumbering
    /// vertices breadth-first with children kept in the given order. Also returns
    /// the new id of every input vertex.
    pub(crate) fn from_adjacency(
        children: &[Vec<usize>],
        weights: &[f64],
        root: usize,
        tag: GeneratorTag,
    ) -> Result<(Self, Vec<VertexId>)> {
        let n = children.len();
        if weights.len() != n || root >= n {
            return Err(Error::MalformedTree("inconsistent adjacency input".into()));
        }
        if n > MAX_VERTICES {
            return Err(Error::InvalidParameter(format!(
                "{n} vertices exceed the materialization limit {MAX_VERTICES}"
            )));
        }
        let mut new_id = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        new_id[root] = 0;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &c in &children[u] {
                if c >= n || new_id[c] != usize::MAX {
                    return Err(Error::MalformedTree(format!(
                        "vertex {c} is reachable twice or out of range"
                    )));
                }
                new_id[c] = order.len() + queue.len();
                queue.push_back(c);
            }
        }
        if order.len() != n {
            return Err(Error::MalformedTree(format!(
                "{} vertices are not reachable from the root",
                n - order.len()
            )));
        }

        let mut tree = WeightedTree {
            parent: vec![NO_PARENT; n],
            weight: Vec::with_capacity(n),
            height: vec![0; n],
            first_child: vec![0; n],
            child_count: vec![0; n],
            level_start: Vec::new(),
            depth_limit: 0,
            tag,
        };
        for (id, &old) in order.iter().enumerate() {
            tree.weight.push(weights[old]);
            let kids = &children[old];
            tree.child_count[id] = kids.len() as u32;
            tree.first_child[id] = kids.first().map_or(n, |&c| new_id[c]) as VertexId;
            for &c in kids {
                let cid = new_id[c];
                tree.parent[cid] = id as VertexId;
                tree.height[cid] = tree.height[id] + 1;
            }
        }
        tree.finish_levels();
        let ids = new_id.into_iter().map(|i| i as VertexId).collect();
        Ok((tree, ids))
    }

    fn finish_levels(&mut self) {
        let max_h = self.height.iter().copied().max().unwrap_or(0);
        self.depth_limit = max_h;
        let mut starts = vec![0 as VertexId; max_h as usize + 2];
        for h in 0..=max_h as usize {
            starts[h + 1] = starts[h];
        }
        // heights are non-decreasing in breadth-first order
        let mut h = 0usize;
        for (v, &hv) in self.height.iter().enumerate() {
            while h < hv as usize {
                h += 1;
                starts[h] = v as VertexId;
            }
        }
        for k in h + 1..starts.len() {
            starts[k] = self.len() as VertexId;
        }
        self.level_start = starts;
    }

    pub fn to_document(&self) -> TreeDocument {
        let nodes = (1..self.len() as VertexId)
            .map(|v| NodeRecord {
                id: v as u64,
                parent: self.parent[v as usize] as u64,
                weight: self.weight(v),
            })
            .collect();
        let (depth_limit, generator) = match &self.tag {
            GeneratorTag::Explicit => (None, None),
            tag => (Some(self.depth_limit), Some(tag.clone())),
        };
        TreeDocument {
            root_weight: self.weight(0),
            nodes,
            depth_limit,
            generator,
        }
    }

    pub fn from_document(doc: &TreeDocument) -> Result<Self> {
        if !doc.root_weight.is_finite() {
            return Err(Error::MalformedTree("root weight is not finite".into()));
        }
        let n = doc.nodes.len() + 1;
        let mut index: HashMap<u64, usize> = HashMap::with_capacity(n);
        index.insert(0, 0);
        for (i, node) in doc.nodes.iter().enumerate() {
            if index.insert(node.id, i + 1).is_some() {
                return Err(Error::MalformedTree(format!(
                    "duplicate vertex id {} (id 0 is reserved for the root)",
                    node.id
                )));
            }
            if !node.weight.is_finite() {
                return Err(Error::MalformedTree(format!(
                    "vertex {} has a non-finite weight",
                    node.id
                )));
            }
        }
        let mut children = vec![Vec::new(); n];
        let mut weights = Vec::with_capacity(n);
        weights.push(doc.root_weight);
        for (i, node) in doc.nodes.iter().enumerate() {
            let p = *index.get(&node.parent).ok_or_else(|| {
                Error::MalformedTree(format!(
                    "vertex {} references missing parent {}",
                    node.id, node.parent
                ))
            })?;
            children[p].push(i + 1);
            weights.push(node.weight);
        }
        let tag = doc.generator.clone().unwrap_or(GeneratorTag::Explicit);
        tag.check()?;
        let (tree, _) = Self::from_adjacency(&children, &weights, 0, tag)?;
        if let Some(d) = doc.depth_limit {
            if d != tree.depth_limit {
                return Err(Error::MalformedTree(format!(
                    "declared depth_limit {d} but the tree has height {}",
                    tree.depth_limit
                )));
            }
        }
        tree.check_generator_consistency()?;
        Ok(tree)
    }

    fn check_generator_consistency(&self) -> Result<()> {
        let Some(ratios) = self.tag.child_ratios() else {
            return Ok(());
        };
        for v in 0..self.len() as VertexId {
            if self.is_leaf(v) {
                if self.height(v) != self.depth_limit {
                    return Err(Error::MalformedTree(format!(
                        "generator-tagged tree has leaf {v} above the truncation height"
                    )));
                }
                continue;
            }
            if self.child_count(v) != ratios.len() {
                return Err(Error::MalformedTree(format!(
                    "vertex {v} has {} children, generator expects {}",
                    self.child_count(v),
                    ratios.len()
                )));
            }
            for (c, r) in self.children(v).zip(&ratios) {
                if self.weight(c) != self.weight(v) * r {
                    return Err(Error::MalformedTree(format!(
                        "weight of vertex {c} does not match the generator ratio"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: TreeDocument = serde_json::from_str(s)?;
        Self::from_document(&doc)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let json =
            serde_json::to_vec(&self.to_document()).expect("tree documents always serialize");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// On-disk tree format. The root has the implicit id 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub root_weight: f64,
    pub nodes: Vec<NodeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_limit: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorTag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: u64,
    pub parent: u64,
    pub weight: f64,
}

/// Every vertex has `branching` children and weights shrink by `ratio` per level.
pub fn build_uniform_tree(branching: u32, ratio: f64, depth: u32) -> Result<WeightedTree> {
    build_generated(GeneratorTag::Uniform { branching, ratio }, 1.0, depth)
}

/// Child `i` of every vertex scales the parent weight by `ratios[i]`.
pub fn build_ifs_tree(ratios: &[f64], depth: u32) -> Result<WeightedTree> {
    build_generated(
        GeneratorTag::Ifs {
            ratios: ratios.to_vec(),
        },
        1.0,
        depth,
    )
}

pub fn build_generated(tag: GeneratorTag, root_weight: f64, depth: u32) -> Result<WeightedTree> {
    tag.check()?;
    let ratios = tag
        .child_ratios()
        .ok_or_else(|| Error::InvalidParameter("explicit trees cannot be generated".into()))?;
    if depth < 1 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    if !(root_weight.is_finite() && root_weight > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "root weight {root_weight} must be positive"
        )));
    }
    let k = ratios.len();
    let mut total = 0usize;
    let mut level_size = 1usize;
    for _ in 0..=depth {
        total = total.saturating_add(level_size);
        level_size = level_size.saturating_mul(k);
    }
    if total > MAX_VERTICES {
        return Err(Error::InvalidParameter(format!(
            "{total} vertices exceed the materialization limit {MAX_VERTICES}"
        )));
    }

    let mut tree = WeightedTree {
        parent: Vec::with_capacity(total),
        weight: Vec::with_capacity(total),
        height: Vec::with_capacity(total),
        first_child: Vec::with_capacity(total),
        child_count: Vec::with_capacity(total),
        level_start: Vec::with_capacity(depth as usize + 2),
        depth_limit: depth,
        tag,
    };
    tree.parent.push(NO_PARENT);
    tree.weight.push(root_weight);
    tree.height.push(0);
    let mut level = 0..1usize;
    for h in 0..=depth {
        tree.level_start.push(level.start as VertexId);
        let next_start = level.end;
        for v in level.clone() {
            if h == depth {
                tree.first_child.push(total as VertexId);
                tree.child_count.push(0);
                continue;
            }
            tree.first_child
                .push((next_start + (v - level.start) * k) as VertexId);
            tree.child_count.push(k as u32);
            let w = tree.weight[v];
            for r in &ratios {
                tree.parent.push(v as VertexId);
                tree.weight.push(w * r);
                tree.height.push(h + 1);
            }
        }
        level = next_start..tree.weight.len();
    }
    tree.level_start.push(total as VertexId);
    Ok(tree)
}

/// Replaces every unary path by a single edge. The collapsed vertex keeps the
/// weight of the top of the chain, or the leaf weight when the chain ends in a leaf.
pub fn reduce(tree: &WeightedTree) -> WeightedTree {
    if (0..tree.len() as VertexId).all(|v| tree.child_count(v) != 1) {
        return tree.clone();
    }
    let mut children: Vec<Vec<usize>> = Vec::new();
    let mut weights = Vec::new();
    // (old top vertex, new id)
    let mut stack = vec![(tree.root(), 0usize)];
    children.push(Vec::new());
    weights.push(0.0);
    while let Some((top, id)) = stack.pop() {
        let mut bottom = top;
        while tree.child_count(bottom) == 1 {
            bottom = tree.children(bottom).start;
        }
        weights[id] = if tree.is_leaf(bottom) {
            tree.weight(bottom)
        } else {
            tree.weight(top)
        };
        for c in tree.children(bottom) {
            let cid = children.len();
            children.push(Vec::new());
            weights.push(0.0);
            children[id].push(cid);
            stack.push((c, cid));
        }
    }
    WeightedTree::from_adjacency(&children, &weights, 0, GeneratorTag::Explicit)
        .expect("collapsing unary chains preserves tree structure")
        .0
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_weight_monotone: bool,
    pub is_reduced: bool,
    pub is_cantorian_at_truncation: bool,
    pub max_branching: usize,
    pub offending_vertices: Vec<VertexId>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.is_weight_monotone && self.is_reduced && self.is_cantorian_at_truncation
    }
}

pub fn validate(tree: &WeightedTree) -> ValidationReport {
    let n = tree.len();
    let mut offending = Vec::new();
    let mut monotone = true;
    let mut reduced = true;
    let mut max_branching = 0;
    for v in 0..n as VertexId {
        let w = tree.weight(v);
        let ok = w > 0.0 && tree.parent(v).is_none_or(|p| w < tree.weight(p));
        if !ok {
            monotone = false;
            offending.push(v);
        }
        let k = tree.child_count(v);
        max_branching = max_branching.max(k);
        if k == 1 {
            reduced = false;
            offending.push(v);
        }
    }
    // branches[v]: some vertex of the subtree of v (within the truncation) has >= 2 children
    let mut branches = vec![false; n];
    let mut cantorian = true;
    for v in (0..n as VertexId).rev() {
        let own = tree.child_count(v) >= 2;
        branches[v as usize] = own || tree.children(v).any(|c| branches[c as usize]);
        if !tree.is_leaf(v) && !branches[v as usize] {
            cantorian = false;
            offending.push(v);
        }
    }
    offending.sort_unstable();
    offending.dedup();
    ValidationReport {
        is_weight_monotone: monotone,
        is_reduced: reduced,
        is_cantorian_at_truncation: cantorian,
        max_branching,
        offending_vertices: offending,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(root_weight: f64, nodes: &[(u64, u64, f64)]) -> TreeDocument {
        TreeDocument {
            root_weight,
            nodes: nodes
                .iter()
                .map(|&(id, parent, weight)| NodeRecord { id, parent, weight })
                .collect(),
            depth_limit: None,
            generator: None,
        }
    }

    #[test]
    fn uniform_tree_counts_and_weights() {
        let t = build_uniform_tree(2, 1.0 / 3.0, 3).unwrap();
        assert_eq!(t.len(), 15);
        for v in t.level(2) {
            assert!((t.weight(v) - 1.0 / 9.0).abs() < 1e-16);
        }
        assert_eq!(t.level(3).len(), 8);
        assert!(t.is_level_truncated());

        let t = build_uniform_tree(3, 0.5, 1).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.leaves().all(|v| t.weight(v) == 0.5));
    }

    #[test]
    fn uniform_vertex_count_formula() {
        for (b, n) in [(2u32, 5u32), (3, 4), (5, 3)] {
            let t = build_uniform_tree(b, 0.2, n).unwrap();
            let expected = (b.pow(n + 1) - 1) / (b - 1);
            assert_eq!(t.len(), expected as usize);
        }
    }

    #[test]
    fn generator_ratio_is_exact_on_every_edge() {
        let t = build_ifs_tree(&[0.5, 0.25, 0.1], 4).unwrap();
        for v in 1..t.len() as VertexId {
            let p = t.parent(v).unwrap();
            let r = [0.5, 0.25, 0.1][t.child_index(v)];
            assert_eq!(t.weight(v), t.weight(p) * r);
        }
    }

    #[test]
    fn rejects_bad_generators() {
        assert!(build_uniform_tree(1, 0.3, 3).is_err());
        assert!(build_uniform_tree(2, 1.0, 3).is_err());
        assert!(build_uniform_tree(2, 0.0, 3).is_err());
        assert!(build_uniform_tree(2, 0.3, 0).is_err());
        assert!(build_ifs_tree(&[0.5], 3).is_err());
        assert!(build_ifs_tree(&[0.5, 1.5], 3).is_err());
    }

    #[test]
    fn ifs_heights_are_ratio_products() {
        let t = build_ifs_tree(&[0.5, 0.25], 2).unwrap();
        let w: Vec<f64> = t.level(2).map(|v| t.weight(v)).collect();
        assert_eq!(w, vec![0.25, 0.125, 0.125, 0.0625]);
    }

    #[test]
    fn equal_ratio_ifs_matches_uniform() {
        let a = build_ifs_tree(&[1.0 / 3.0, 1.0 / 3.0], 5).unwrap();
        let b = build_uniform_tree(2, 1.0 / 3.0, 5).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.len(), b.len());
        for v in 0..a.len() as VertexId {
            assert_eq!(a.parent(v), b.parent(v));
        }
    }

    #[test]
    fn levels_and_children_are_contiguous() {
        let t = build_uniform_tree(3, 0.25, 3).unwrap();
        assert_eq!(t.level(0), 0..1);
        assert_eq!(t.level(1), 1..4);
        assert_eq!(t.level(2), 4..13);
        assert_eq!(t.children(2), 7..10);
        assert_eq!(t.ancestor_at(20, 1), Some(1));
        assert_eq!(t.path_to(20), vec![0, 1, 6, 20]);
        assert_eq!(t.leftmost_leaf(3), t.children(t.children(3).start).start);
    }

    #[test]
    fn reduce_collapses_unary_root() {
        // root -> a -> {b, c}
        let t = WeightedTree::from_document(&doc(1.0, &[(1, 0, 0.8), (2, 1, 0.3), (3, 1, 0.2)]))
            .unwrap();
        assert!(!validate(&t).is_reduced);
        let r = reduce(&t);
        assert_eq!(r.len(), 3);
        assert_eq!(r.weight(0), 1.0);
        assert_eq!(r.children(0), 1..3);
        assert_eq!((r.weight(1), r.weight(2)), (0.3, 0.2));
        assert!(validate(&r).is_valid());
    }

    #[test]
    fn reduce_is_identity_on_reduced_trees() {
        let t = build_uniform_tree(2, 0.4, 4).unwrap();
        assert_eq!(reduce(&t), t);
    }

    #[test]
    fn reduce_keeps_leaf_weight_at_chain_end() {
        // root -> {a -> leaf(0.1), b(0.4)}
        let t = WeightedTree::from_document(&doc(1.0, &[(1, 0, 0.5), (2, 0, 0.4), (3, 1, 0.1)]))
            .unwrap();
        let r = reduce(&t);
        let mut leaves: Vec<f64> = r.leaves().map(|v| r.weight(v)).collect();
        leaves.sort_by(f64::total_cmp);
        assert_eq!(leaves, vec![0.1, 0.4]);
    }

    #[test]
    fn validation_flags_defects() {
        let t = build_uniform_tree(2, 1.0 / 3.0, 5).unwrap();
        let rep = validate(&t);
        assert!(rep.is_valid());
        assert_eq!(rep.max_branching, 2);
        assert!(rep.offending_vertices.is_empty());

        let t = WeightedTree::from_document(&doc(1.0, &[(1, 0, 1.0), (2, 0, 0.5)])).unwrap();
        let rep = validate(&t);
        assert!(!rep.is_weight_monotone);
        assert_eq!(rep.offending_vertices, vec![1]);

        let t = WeightedTree::from_document(&doc(
            1.0,
            &[
                (1, 0, 0.5),
                (2, 0, 0.5),
                (3, 1, 0.25),
                (4, 3, 0.1),
                (5, 3, 0.1),
            ],
        ))
        .unwrap();
        let rep = validate(&t);
        assert!(!rep.is_reduced);
        assert!(rep.is_cantorian_at_truncation);
        assert!(rep.offending_vertices.contains(&1));
    }

    #[test]
    fn pure_chain_is_not_cantorian() {
        let t = WeightedTree::from_document(&doc(1.0, &[(1, 0, 0.5), (2, 1, 0.25)])).unwrap();
        let rep = validate(&t);
        assert!(!rep.is_cantorian_at_truncation);
        assert!(!rep.is_valid());
        assert_eq!(rep.offending_vertices, vec![0, 1]);
    }

    #[test]
    fn malformed_documents_are_rejected() {
        assert!(WeightedTree::from_document(&doc(1.0, &[(1, 7, 0.5)])).is_err());
        assert!(WeightedTree::from_document(&doc(1.0, &[(1, 0, 0.5), (1, 0, 0.4)])).is_err());
        assert!(WeightedTree::from_document(&doc(1.0, &[(0, 0, 0.5)])).is_err());
        // 1 -> 2 -> 1 cycle detached from the root
        assert!(WeightedTree::from_document(&doc(1.0, &[(1, 2, 0.5), (2, 1, 0.4)])).is_err());
        assert!(WeightedTree::from_document(&doc(f64::NAN, &[])).is_err());
    }

    #[test]
    fn children_follow_file_order() {
        let t = WeightedTree::from_document(&doc(1.0, &[(9, 0, 0.2), (4, 0, 0.6)])).unwrap();
        assert_eq!(t.weight(1), 0.2);
        assert_eq!(t.weight(2), 0.6);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        for t in [
            build_uniform_tree(2, 1.0 / 3.0, 6).unwrap(),
            build_ifs_tree(&[0.5, 0.25, 0.123456789], 3).unwrap(),
        ] {
            let back = WeightedTree::from_json_str(&t.to_json_string().unwrap()).unwrap();
            assert_eq!(back, t);
            assert_eq!(back.content_hash(), t.content_hash());
        }
    }

    #[test]
    fn tampered_generator_weights_are_rejected() {
        let t = build_uniform_tree(2, 0.25, 2).unwrap();
        let mut d = t.to_document();
        d.nodes[3].weight *= 0.5;
        assert!(WeightedTree::from_document(&d).is_err());
        d.generator = None;
        d.depth_limit = None;
        assert!(WeightedTree::from_document(&d).is_ok());
    }
}
