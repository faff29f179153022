//! Sparse-camera 4D Gaussian reconstruction with a spatio-temporal
//! distortion field.
//!
//! The crate is organized bottom-up:
//!
//! * [`diffcore`]: parameter store, Adam, learning-rate schedules, finite-difference checking
//! * [`featplanes`]: multi-resolution feature planes with bilinear lookup and grid regularizers
//! * [`gauss4d`]: 4D Gaussian primitives, rotations, temporal slicing, densification
//! * [`stdf`]: the distortion field that perturbs Gaussians per generated view
//! * [`splat`]: pinhole projection and exact alpha-blended rasterization
//! * [`optimloop`]: losses, metrics, training schedule and test-pose alignment
//! * [`camsel`]: greedy camera-subset selection
//! * [`harness`]: synthetic datasets with injected distortions, evaluation and reports

pub mod camsel;
pub mod diffcore;
pub mod error;
pub mod featplanes;
pub mod gauss4d;
pub mod harness;
pub mod optimloop;
pub mod splat;
pub mod stdf;

pub use error::{Error, Result};
