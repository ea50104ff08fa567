//! Random-matrix laboratory for eigenvector overlaps of Wigner matrices.

pub mod cli;
pub mod eigensolve;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod ncfree;
pub mod observables;
pub mod quadrature;
pub mod resolvent;
pub mod semicircle;

pub use error::{Error, Result};
