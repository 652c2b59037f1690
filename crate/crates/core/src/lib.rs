//! Numerical toolkit for checking rank-one convexity of isotropic energies
//! given through their ordered-singular-value representation `ĝ`.

pub mod config;
pub mod criteria;
pub mod energymodel;
pub mod error;
pub mod exprlang;
pub mod linescan;
pub mod smallmat;
pub mod verdict;

pub use error::{Result, RocError};
