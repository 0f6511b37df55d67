//! Support functions on the chart `{y^{n+1} = -1}`: grids, discrete fields,
//! finite differences, the affine transformation law and the embedding map.
//!
//! A support function `s(Y) = sup_{x ∈ L} ⟨x, Y⟩` is convex and positively
//! homogeneous of degree one, so it is determined on the lower half-space by its
//! restriction `s(y) = s(y, -1)`. Everything here works in that single chart.

mod affine;
mod field;
mod geometry;
mod grid;
pub mod io;
mod polytope;
mod stencil;

pub use affine::{apply_affine, AffineMap, Transformed, UNIMODULAR_TOL};
pub use field::{
    convexity_check, default_convexity_tol, eval_homogeneous, ChartFn, ConvexityReport, Extended, Support, SupportField,
};
pub(crate) use geometry::{embedding_from, induced_metric_from};
pub use geometry::{embedding_point, induced_metric, tangent_frame};
pub use grid::{GridSpec, MIN_POINTS};
pub use polytope::{support_of_polytope, BodyKind, NoncompactBodySpec};
pub use stencil::{derivatives, Derivatives, Sym3};
