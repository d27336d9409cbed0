//! Pseudo-spectral solver for incompressible neo-Hookean elastodynamics on a
//! periodic box, with Littlewood–Paley norm tooling and an empirical
//! inequality lab.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod corpus;
pub mod deformation;
pub mod dynamics;
pub mod grid;
pub mod lab;
pub mod lagrangian;
pub mod lp;
pub mod ops;
pub mod par;
pub mod scenario;
pub mod vorticity;

pub use grid::{make_grid, Grid, GridError, SpaceTag, SpectralField, VectorField};
