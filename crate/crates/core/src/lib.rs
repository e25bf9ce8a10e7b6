//! Finite-difference laboratory for the linearized vacuum Einstein equations
//! on a corner domain `{t >= 0, x1 <= 0}` with conformal-mean-curvature
//! boundary data and corner-angle data.
//!
//! The crate builds, on structured grids:
//! - corner geometry: model metrics, hypersurface frames, localization;
//! - discrete tensor calculus: connections, wave operators, linearized Ricci
//!   and gauged Einstein operators, linearized constraints;
//! - wave solvers: bulk Dirichlet problems, boundary Cauchy problems and a
//!   transport integrator, with energy norms and convergence studies;
//! - the harmonic-gauge system and its propagation checks;
//! - the corner compatibility/corner data machinery and the three boundary
//!   evolution equations for the conformal factor, the mixed normal
//!   components and the normal-normal component;
//! - the staged iteration solving the linear problem, target verification,
//!   multi-patch assembly, the self-adjointness defect, the slice symplectic
//!   form and a zero-data stability probe;
//! - the explicit flat solid-cylinder family with identical boundary data
//!   distinguished only by the corner angle.

pub mod boundary;
pub mod calculus;
pub mod corner;
pub mod cylinder;
pub mod domain;
pub mod error;
pub mod field;
pub mod frame;
pub mod gauge;
pub mod grid;
pub mod ibcvp;
pub mod metric;
// pub mod report;
pub mod slice;
pub mod smallmat;
pub mod stencil;
pub mod target;
pub mod variational;
pub mod variations;
pub mod wave;

pub use error::{Error, Result};
