//! Weighted diffeomorphism groups of Euclidean space, sampled numerically.

pub mod actions;
pub mod diff_group;
pub mod error;
pub mod jets;
pub mod linalg;
pub mod mapping_group;
pub mod quasi_inverse;
pub mod regularity;
pub mod samples;
pub mod suites;
pub mod weights;

pub use error::{Error, Result};
