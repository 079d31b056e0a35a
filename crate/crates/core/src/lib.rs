//! Diffeomorphic workspace mappings for replicating one robot's motion on
//! others.
//!
//! Paired key points in a primary and a replica workspace define a smooth,
//! invertible map between the two. Three families are fitted:
//!
//! * DIFF: a greedy composition of Gaussian RBF translation steps, with spin
//!   steps for orientation.
//! * R-DIFF: DIFF plus orbital steps that rotate points about the origin.
//! * TA-DIFF: a twisted affine transform followed by DIFF refinement.
//!
//! [`evaluation`] measures key-point error and the maximum Jacobian spectral
//! norm on a grid, and [`replication`] simulates followers tracking a primary
//! trajectory pushed through a fitted map.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod fitting;
pub mod geom;
pub mod io;
pub mod mapping;
pub mod replication;
pub mod scenario;

pub use error::{Error, Result};
