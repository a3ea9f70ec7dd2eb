//! Finite-volume numerics for spherically local topological insulators:
//! lattices and cones, Clifford representations, operator calculus, locality
//! diagnostics, symmetry classes, model Hamiltonians, index estimators and the
//! constructive homotopy machinery.

pub mod clifford;
pub mod error;
pub mod homotopy;
pub mod invariants;
pub mod lattice;
pub mod linalg;
pub mod locality;
pub mod models;
pub mod operator;
pub mod symmetry;

pub use error::{Error, Result};
