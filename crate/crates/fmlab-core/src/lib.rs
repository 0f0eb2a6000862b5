//! Numerical laboratory for random Schrödinger operators on finite lattices.
//!
//! The crate is organised bottom-up: [`lattice`] builds domains and
//! finite-difference Hamiltonians, [`disorder`] samples alloy-type potentials,
//! [`resolvent`] and [`spectral`] compute resolvent blocks and eigenpairs,
//! [`moments`] averages fractional powers over the ensemble and [`gronwall`]
//! handles the weighted kernel recursion.

// NaN must fail every positivity check, hence `!(x > 0.0)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod disorder;
pub mod error;
pub mod fit;
pub mod gronwall;
pub mod lattice;
pub mod linalg;
pub mod moments;
pub mod par;
pub mod quad;
pub mod resolvent;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
