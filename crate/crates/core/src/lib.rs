//! Labeled random finite set tracking with a joint detection and image
//! likelihood: GLMB densities, models, the Gibbs-truncated recursion, a
//! scene simulator and the OSPA metric.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assignment;
pub mod density;
pub mod error;
pub mod filter;
pub mod gaussian;
pub mod image;
pub mod label;
pub mod models;
pub mod ospa;
pub mod sim;

pub use density::{Association, Estimate, GlmbComponent, GlmbDensity, Track};
pub use error::{Error, Result};
pub use filter::{FilterConfig, GlmbFilter, ModelSet};
pub use gaussian::{GaussianDensity, StateCovariance, StateVector};
pub use image::{Image, Patch};
pub use label::TrackLabel;
