//! Parameter storage, optimization and gradient verification.
//!
//! Every differentiable operation in this crate is written as an explicit
//! forward/backward pair. Trainable values live in a [`ParamStore`], which
//! carries gradients and Adam moments alongside the values and serializes to
//! a bit-exact JSON checkpoint.

mod adam;
mod checkpoint;
mod gradcheck;
pub mod hexfloat;
mod params;
mod schedule;

pub use adam::AdamConfig;
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, grad_check_fn, GradProbe, GradReport};
pub use params::{ParamEntry, ParamId, ParamStore, RowPlan};
pub use schedule::LrSchedule;
