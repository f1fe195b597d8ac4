//! Minkowski and Hausdorff dimensions of affine multiplicative subshifts.
//!
//! A system `(p, q; a, b)` with a 0-1 transition matrix `A` on `m` letters
//! constrains every pair of positions `(pk + a, qk + b)` of a one-sided
//! sequence to be an admissible transition of `A`. The lattice splits into
//! chains under `x ↦ q(x - a)/p + b`, and both dimensions are driven by the
//! densities of chains of each length.

pub mod error;
pub mod higher_order;
pub mod hausdorff;
pub mod lattice;
pub mod matrix;
pub mod measures;
pub mod minkowski;
pub mod numeric;
pub mod oracle;
pub mod report;
pub mod system;

pub use error::{Error, Result};
pub use lattice::{Census, Chain, ChainDecomposition, FullLength};
pub use matrix::TransitionMatrix;
pub use report::{ChainContribution, DimensionKind, DimensionReport};
pub use system::{AffineSystem, CaseTag, SystemSpec};
