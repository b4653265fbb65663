//! Spectral geometry on ultrametric Cantor sets.
//!
//! A Cantor set with an ultrametric is encoded by a weighted rooted tree whose
//! boundary carries the metric `d(x, y) = weight(x ∧ y)`. On top of the tree
//! this crate computes the Dirac zeta function and its abscissa, the canonical
//! measure, the Laplacian `Δ_s` and its spectrum, and on the triadic Cantor set
//! the heat kernel and the associated jump diffusion.

pub mod diffusion;
pub mod error;
pub mod laplacian;
pub mod linalg;
pub mod spectral;
pub mod tree;
pub mod ultrametric;

pub use error::{Error, Result};
pub use tree::{GeneratorTag, VertexId, WeightedTree};
