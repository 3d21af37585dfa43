//! Denoiser fields: maps `(x_t, t) -> x_{0|t}` and scalar weight fields.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

pub type Point = DVector<f64>;

/// Gate state recorded by a safe composition during one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateRecord {
    /// Raw β before gating (0 outside the critical steps).
    pub beta: f64,
    pub gate_open: bool,
    /// Weight multiplying `(E_data - E_unsafe)`, after gating and scaling.
    pub applied_weight: f64,
}

/// Side channel filled by compositions while a field is evaluated.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub gate: Option<GateRecord>,
}

/// A data-prediction denoiser. Implementations must be pure: equal
/// inputs give bitwise-equal outputs.
pub trait Denoiser: Send + Sync {
    fn dim(&self) -> usize;

    fn label(&self) -> &str;

    fn denoise_traced(&self, x_t: &Point, t: usize, trace: &mut Trace) -> Result<Point>;

    fn denoise(&self, x_t: &Point, t: usize) -> Result<Point> {
        self.denoise_traced(x_t, t, &mut Trace::default())
    }
}

pub type DenoiserField = Arc<dyn Denoiser>;

impl fmt::Debug for dyn Denoiser {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Denoiser({}, d={})", self.label(), self.dim())
    }
}

/// A nonnegative scalar weight over `(x_t, t)`, e.g. β* or its estimate.
pub trait WeightField: Send + Sync {
    fn weight(&self, x_t: &Point, t: usize) -> Result<f64>;
}

pub type WeightEvaluator = Arc<dyn WeightField>;

impl<F> WeightField for F
where
    F: Fn(&Point, usize) -> Result<f64> + Send + Sync,
{
    fn weight(&self, x_t: &Point, t: usize) -> Result<f64> {
        self(x_t, t)
    }
}

/// Wraps a closure as a denoiser. Mostly useful for constant fields and tests.
pub struct FnDenoiser<F> {
    dim: usize,
    label: String,
    f: F,
}

impl<F> FnDenoiser<F>
where
    F: Fn(&Point, usize) -> Result<Point> + Send + Sync,
{
    pub fn new(dim: usize, label: impl Into<String>, f: F) -> Self {
        Self {
            dim,
            label: label.into(),
            f,
        }
    }
}

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&Point, usize) -> Result<Point> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn denoise_traced(&self, x_t: &Point, t: usize, _trace: &mut Trace) -> Result<Point> {
        check_dim(self.dim, x_t)?;
        (self.f)(x_t, t)
    }
}

/// A field that ignores its input and returns a fixed point.
pub fn constant_field(value: Point, label: &str) -> DenoiserField {
    let dim = value.len();
    Arc::new(FnDenoiser::new(dim, label, move |_, _| Ok(value.clone())))
}

pub(crate) fn check_dim(expected: usize, x: &Point) -> Result<()> {
    if x.len() != expected {
        Err(Error::DimensionMismatch {
            expected,
            got: x.len(),
        })
    } else {
        Ok(())
    }
}

pub(crate) fn check_same_dim(fields: &[&DenoiserField]) -> Result<usize> {
    let d = fields[0].dim();
    for f in &fields[1..] {
        if f.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.dim(),
            });
        }
    }
    Ok(d)
}
