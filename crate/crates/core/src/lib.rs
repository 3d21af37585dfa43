//! Desk-scale laboratory for safe diffusion sampling over Gaussian-mixture
//! data: closed-form and dataset-driven denoisers, guidance compositions,
//! reverse-time samplers and sample-set metrics.

pub mod empirical;
pub mod error;
pub mod field;
pub mod guidance;
pub mod metrics;
pub mod mixture;
pub mod numeric;
pub mod sampler;
pub mod schedule;
pub mod verify;

pub use error::{Error, Result};
pub use field::{Denoiser, DenoiserField, Point, WeightEvaluator, WeightField};
