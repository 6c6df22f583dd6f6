//! Numerics for `-Lap u = 2 K e^u` in the unit disk with the nonlinear
//! boundary condition `d_nu u + 2 = 2 h e^{u/2}`: a variational polar
//! discretization, the energy and its perturbed family, Newton, descent,
//! continuation and mountain-pass solvers, radial shooting, bubble test
//! functions and diagnostics.

// Parameter guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod curvature;
pub mod diagnostics;
pub mod disk;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod radial;
pub mod solvers;
pub mod sum;
pub mod test_functions;

pub use error::{Error, Result};
pub use grid::{BoundaryField, Grid, ScalarField};
