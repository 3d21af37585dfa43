//! Dataset-driven estimators: the kernel-weighted unsafe denoiser and the
//! Monte-Carlo estimate of `β(x_t) = ∫ p_unsafe(x) q_t(x_t|x) dx`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::field::{check_dim, Denoiser, DenoiserField, Point, Trace, WeightEvaluator, WeightField};
use crate::numeric::log_sum_exp;
use crate::schedule::NoiseSchedule;

/// RBF bandwidth used alongside SLD-style guidance.
pub const BANDWIDTH_SLD: f64 = 1.0;
/// RBF bandwidth used alongside SAFREE-style guidance.
pub const BANDWIDTH_SAFREE: f64 = 3.15;

#[derive(Debug, Clone, PartialEq)]
pub struct UnsafeDataset {
    dim: usize,
    points: Vec<Point>,
}

impl UnsafeDataset {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidParameter("unsafe dataset needs at least one point".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidParameter("dataset points must have positive dimension".into()));
        }
        for p in &points {
            check_dim(dim, p)?;
        }
        Ok(Self { dim, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelConfig {
    /// The forward perturbation kernel `q_t(x_t | x)`.
    Diffusion,
    /// `exp(-‖x_t/α_t − x‖² / (2h²))`, compared in predicted-clean space.
    Rbf { bandwidth: f64 },
}

impl KernelConfig {
    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidBandwidth(bandwidth));
        }
        Ok(KernelConfig::Rbf { bandwidth })
    }

    pub fn rbf_sld() -> Self {
        KernelConfig::Rbf { bandwidth: BANDWIDTH_SLD }
    }

    pub fn rbf_safree() -> Self {
        KernelConfig::Rbf {
            bandwidth: BANDWIDTH_SAFREE,
        }
    }
}

pub fn rbf_kernel(x: &[f64], y: &[f64], bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidBandwidth(bandwidth));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-sq / (2.0 * bandwidth * bandwidth)).exp())
}

/// Per-point log kernel values `log K_t(x_t, x^(n))`.
fn log_kernel_values(
    ds: &UnsafeDataset,
    s: &NoiseSchedule,
    kernel: KernelConfig,
    t: usize,
    x_t: &Point,
) -> Result<Vec<f64>> {
    check_dim(ds.dim(), x_t)?;
    s.check_step(t)?;
    match kernel {
        KernelConfig::Diffusion => ds
            .points()
            .iter()
            .map(|p| s.log_kernel(t, x_t.as_slice(), p.as_slice()))
            .collect(),
        KernelConfig::Rbf { bandwidth } => {
            if !(bandwidth > 0.0) {
                return Err(Error::InvalidBandwidth(bandwidth));
            }
            let a = s.alpha(t);
            if a == 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "rbf kernel needs alpha > 0, step {t} has alpha = 0"
                )));
            }
            let inv = 1.0 / (2.0 * bandwidth * bandwidth);
            Ok(ds
                .points()
                .iter()
                .map(|p| {
                    let sq: f64 = x_t.iter().zip(p.iter()).map(|(x, y)| (x / a - y).powi(2)).sum();
                    -sq * inv
                })
                .collect())
        }
    }
}

/// Normalized weights over the dataset at `(t, x_t)`.
pub fn dataset_weights(
    ds: &UnsafeDataset,
    s: &NoiseSchedule,
    kernel: KernelConfig,
    t: usize,
    x_t: &Point,
) -> Result<Vec<f64>> {
    let mut w = log_kernel_values(ds, s, kernel, t, x_t)?;
    crate::numeric::softmax_in_place(&mut w);
    Ok(w)
}

pub struct EmpiricalUnsafeDenoiser {
    ds: Arc<UnsafeDataset>,
    schedule: Arc<NoiseSchedule>,
    kernel: KernelConfig,
}

impl Denoiser for EmpiricalUnsafeDenoiser {
    fn dim(&self) -> usize {
        self.ds.dim()
    }

    fn label(&self) -> &str {
        "empirical-unsafe"
    }

    fn denoise_traced(&self, x_t: &Point, t: usize, _trace: &mut Trace) -> Result<Point> {
        let w = dataset_weights(&self.ds, &self.schedule, self.kernel, t, x_t)?;
        let mut out = DVector::zeros(self.ds.dim());
        for (p, wi) in self.ds.points().iter().zip(&w) {
            if *wi != 0.0 {
                out.axpy(*wi, p, 1.0);
            }
        }
        Ok(out)
    }
}

/// Kernel-weighted average of the dataset points.
pub fn empirical_unsafe_denoiser(
    ds: Arc<UnsafeDataset>,
    s: Arc<NoiseSchedule>,
    kernel: KernelConfig,
) -> Result<DenoiserField> {
    if let KernelConfig::Rbf { bandwidth } = kernel {
        KernelConfig::rbf(bandwidth)?;
    }
    Ok(Arc::new(EmpiricalUnsafeDenoiser {
        ds,
        schedule: s,
        kernel,
    }))
}

/// `(1/N) Σ_n K_t(x_t, x^(n))`; 0 when every term underflows.
pub fn empirical_beta_with_kernel(
    ds: &UnsafeDataset,
    s: &NoiseSchedule,
    kernel: KernelConfig,
    t: usize,
    x_t: &Point,
) -> Result<f64> {
    let logs = log_kernel_values(ds, s, kernel, t, x_t)?;
    let v = (log_sum_exp(&logs) - (ds.len() as f64).ln()).exp();
    Ok(if v.is_finite() { v } else { 0.0 })
}

/// Unbiased estimate of `p_unsafe,t(x_t)` from the dataset.
pub fn empirical_beta(ds: &UnsafeDataset, s: &NoiseSchedule, t: usize, x_t: &Point) -> Result<f64> {
    empirical_beta_with_kernel(ds, s, KernelConfig::Diffusion, t, x_t)
}

pub struct EmpiricalBeta {
    ds: Arc<UnsafeDataset>,
    schedule: Arc<NoiseSchedule>,
    kernel: KernelConfig,
}

impl EmpiricalBeta {
    pub fn new(ds: Arc<UnsafeDataset>, schedule: Arc<NoiseSchedule>, kernel: KernelConfig) -> Self {
        Self { ds, schedule, kernel }
    }
}

impl WeightField for EmpiricalBeta {
    fn weight(&self, x_t: &Point, t: usize) -> Result<f64> {
        empirical_beta_with_kernel(&self.ds, &self.schedule, self.kernel, t, x_t)
    }
}

pub fn empirical_beta_evaluator(
    ds: Arc<UnsafeDataset>,
    s: Arc<NoiseSchedule>,
    kernel: KernelConfig,
) -> WeightEvaluator {
    Arc::new(EmpiricalBeta::new(ds, s, kernel))
}
