//! Numerical toolkit for qudit steering functionals: quantum and classical
//! bounds, self-testing checks, extremal POVMs, randomness certification and
//! the extended qutrit Bell scenario.

pub mod bell3;
pub mod error;
pub mod linalg;
pub mod measurements;
pub mod povm;
pub mod random;
pub mod randomness;
pub mod states;
pub mod selftest;
pub mod steering;
pub mod wire;

pub use error::{Error, Result};
