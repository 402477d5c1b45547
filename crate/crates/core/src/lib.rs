//! Numerical laboratory for the magnetized Euler-Poisson system and its
//! Zakharov-Kuznetsov long-wave limit on a periodic torus.
//!
//! The crate provides the pseudospectral substrate (`grid`, `field`), the
//! nonlinear Poisson sub-problem (`poisson`), linear plane-wave theory
//! (`dispersion`), time integration of the scaled Euler-Poisson system
//! (`sim`), the Zakharov-Kuznetsov solver (`zk`) and the long-wave ansatz
//! construction with its residual diagnostics (`profiles`).

pub mod dispersion;
pub mod error;
pub mod field;
pub mod grid;
pub mod poisson;
pub mod profiles;
pub mod sim;
pub mod zk;

pub use error::{Error, Result};
pub use field::{ScalarField, Spectrum, VectorField};
pub use grid::{make_grid, Grid};
