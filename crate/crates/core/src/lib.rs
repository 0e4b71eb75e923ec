//! Best-scored random forest density estimation and density-based clustering.

pub mod cli;
pub mod clustering;
pub mod data;
pub mod density;
pub mod error;
pub mod eval;
pub mod graph;
pub mod partition;
pub mod points;
pub mod rng;
pub mod setops;
pub mod svg;

pub use error::{Error, Result};
pub use points::Points;
