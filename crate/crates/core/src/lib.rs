//! Simulations of memorization and conditional mutual information in
//! stochastic convex optimization over the hypercube `{±1/√d}^d`.

pub mod attacks;
pub mod error;
pub mod exp;
pub mod hypercube;
pub mod info;
pub mod rng;
pub mod learners;
pub mod sco;

pub use error::{Error, Result};
