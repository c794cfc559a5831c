//! Numerics for the special Lagrangian parabolic family `∂u/∂t = F_τ(D²u)`
//! in pseudo-Euclidean space, `τ ∈ [0, π/2]`.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs: file formats, configuration and the command line
//! live in the `lagflow` companion crate.
//!
//! Module map:
//!
//! - [`operator`]: the five-branch operator `F_τ`, its eigenvalue derivative,
//!   admissibility cones, the homotopy blend with the Laplacian.
//! - [`linalg`]: symmetric `n × n` matrices (`n ≤ 3`) and their eigensystems.
//! - [`field`]: box grids, scalar fields, finite differences, interpolation,
//!   parabolic rescaling.
//! - [`flow`]: explicit time integration with boundary policies and monitors.
//! - [`analysis`]: cone conditions, decay fits, induced metric, geometry checks.
//! - [`expander`]: self-expander residuals, normalized flow, Newton solver.
//! - [`transform`]: potential maps between regimes and the cross-flow harness.
//! - [`identities`]: pointwise checks of the operator identities.
//! - [`initial`]: initial-data presets used by experiments and tests.
#![no_std]
// `!(x > 0.0)` is how NaN gets rejected; indexed loops mirror the stencils.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
mod error;
pub mod expander;
pub mod field;
pub mod flow;
pub mod identities;
pub mod initial;
pub mod linalg;
pub mod operator;
pub mod transform;

pub use error::{Error, Result};
pub use field::{Grid, ScalarField};
pub use flow::{BoundaryPolicy, FlowState, RunConfig, Trajectory};
pub use linalg::SymMatrix;
pub use operator::{Branch, EigenTuple, TauRegime};

/// Crate version, recorded in experiment metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
