//! Periodic homogenization of nonconvex energy densities with a convex
//! effective domain and a determinant barrier, in two dimensions.
//!
//! The numerical core is generic over the floating point type through
//! [`Real`]; the aliases below fix it to `f64` for everyday use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra2d;
pub mod cli;
pub mod domain;
pub mod error;
pub mod fem_cell;
pub mod harness;
pub mod homog;
pub mod integrand;
pub mod scalar;
pub mod solver;

pub use algebra2d::{cof2, det2, mixed_det, Mat2};
pub use domain::{boundary_ray, DomainGeometry, EffectiveDomain, RayExit};
pub use error::{Error, Result};
pub use fem_cell::{CellMesh, DisplacementField, GridRect};
pub use integrand::{EnergyDensity, Growth, IntegrandParams, PhiModel, Point, StoredEnergy};
pub use scalar::{ExtReal, Real};
pub use solver::{SolveDiagnostics, SolverOptions};

pub type Matrix = Mat2<f64>;
pub type Mesh = CellMesh<f64>;
pub type Field = DisplacementField<f64>;
pub type Stored = StoredEnergy<f64>;
pub type GrowthDensity = Growth<f64>;
pub type CellResult = homog::CellResult<f64>;
pub type HomogRecord = homog::HomogRecord<f64>;
