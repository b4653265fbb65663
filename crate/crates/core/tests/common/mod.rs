#![allow(dead_code)]

use cantor_core::tree::{NodeRecord, TreeDocument};
use cantor_core::WeightedTree;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random weight-monotone tree; `unary` is the chance a vertex gets a single child.
pub fn random_tree(seed: u64, max_vertices: usize, unary: f64) -> WeightedTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::new();
    let mut weights = vec![1.0f64];
    let mut frontier = vec![0u64];
    let mut next = 1u64;
    while let Some(v) = frontier.pop() {
        if next as usize >= max_vertices {
            break;
        }
        let k = if rng.random::<f64>() < unary {
            1
        } else if v != 0 && rng.random::<f64>() < 0.3 {
            0
        } else {
            rng.random_range(2..=3)
        };
        for _ in 0..k {
            let w = weights[v as usize] * rng.random_range(0.1..0.9);
            nodes.push(NodeRecord {
                id: next,
                parent: v,
                weight: w,
            });
            weights.push(w);
            frontier.insert(0, next);
            next += 1;
        }
    }
    let doc = TreeDocument {
        root_weight: 1.0,
        nodes,
        depth_limit: None,
        generator: None,
    };
    WeightedTree::from_document(&doc).expect("generated tree is well formed")
}

pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Random tree with every leaf at `depth`, 2 or 3 children per vertex.
pub fn random_level_tree(seed: u64, depth: u32) -> WeightedTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::new();
    let mut level = vec![(0u64, 1.0f64)];
    let mut next = 1u64;
    for _ in 0..depth {
        let mut below = Vec::new();
        for &(v, w) in &level {
            for _ in 0..rng.random_range(2..=3) {
                let cw = w * rng.random_range(0.15..0.45);
                nodes.push(NodeRecord {
                    id: next,
                    parent: v,
                    weight: cw,
                });
                below.push((next, cw));
                next += 1;
            }
        }
        level = below;
    }
    let doc = TreeDocument {
        root_weight: 1.0,
        nodes,
        depth_limit: None,
        generator: None,
    };
    WeightedTree::from_document(&doc).expect("generated tree is well formed")
}
