//! Stokes flow on two overlapping, non-matching triangle meshes, coupled
//! across the artificial interface by a stabilized Nitsche method.
//!
//! The pipeline is: build a background mesh and an overlapping mesh
//! ([`mesh`]), compute the cut geometry ([`geometry`]), assemble the
//! equal-order P1 system ([`assembly`]) and solve it or inspect its spectrum
//! ([`linalg`]), then measure errors ([`analysis`]). [`experiments`] wires
//! these into the convergence, conditioning and inf-sup studies.

// index loops mirror the local element matrices; !(x > 0) also rejects NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod par;
pub mod point;
pub mod quadrature;
pub mod spaces;
pub mod vtk;

pub use error::{Error, Result};
pub use point::Point2;
