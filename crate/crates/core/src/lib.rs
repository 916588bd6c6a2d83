//! Mean curvature flow of graphs `Σ ⊂ Σ₁ × Σ₂` with `dim Σ₂ = 2`, where the
//! factors are flat tori or round spheres.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: factor metrics, Christoffel symbols, product curvature.
//! - [`grid`], [`field`], [`snapshot`]: the discretized map `f` and its persistence.
//! - [`gauss`]: singular values, `η`, `η₁`, adapted frames, second fundamental form.
//! - [`flow`]: the nonparametric flow, step control and the run loop.
//! - [`diagnostics`]: monitors, Laplace-Beltrami and the evolution verifiers.

pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod field;
pub mod flow;
pub mod gauss;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod snapshot;

pub use error::{Error, Result};
pub use exec::Execution;
pub use field::{FlowState, MapField};
pub use geometry::{ManifoldSpec, ProductSpec};
pub use grid::{make_grid, Grid};
