//! Reverse-time solvers and the safe-denoiser sampling loop.
//!
//! Each sample draws from its own random stream keyed by `(seed,
//! sample_index)`, so results do not depend on how samples are scheduled
//! across threads.

use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::empirical::UnsafeDataset;
use crate::error::{Error, Result};
use crate::field::{DenoiserField, Point, Trace, WeightEvaluator};
use crate::guidance::{
    cfg, combine_safree_ours, combine_sld_ours, negative_guidance, safe_compose, safree_term, sld,
    sparse_repellency, GuidanceConfig,
};
use crate::schedule::NoiseSchedule;

/// Stream id reserved for dataset draws; sample streams use their index.
pub const DATASET_STREAM: u64 = u64::MAX;

/// Deterministic random stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Ddpm,
    Ddim,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    StandardNormal,
    /// Sample `i` starts from `points[i % points.len()]`.
    FixedPoints(Vec<Point>),
}

/// How `x_{0|t}` is assembled from the available fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidanceMode {
    Baseline,
    Cfg,
    NegativeGuidance,
    Sld,
    Safree,
    Safe,
    SafreeSafe,
    SldSafe,
    SparseRepellency,
}

impl GuidanceMode {
    pub fn uses_safe_term(self) -> bool {
        matches!(self, GuidanceMode::Safe | GuidanceMode::SafreeSafe | GuidanceMode::SldSafe)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: Solver,
    pub mode: GuidanceMode,
    pub gc: GuidanceConfig,
    /// Multiplies β on top of η.
    pub weight_scale: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub init: Init,
    pub record_trajectories: bool,
    pub record_diagnostics: bool,
}

impl RunConfig {
    pub fn new(solver: Solver, mode: GuidanceMode, n_samples: usize, seed: u64) -> Self {
        Self {
            solver,
            mode,
            gc: GuidanceConfig::default(),
            weight_scale: 1.0,
            n_samples,
            seed,
            init: Init::StandardNormal,
            record_trajectories: false,
            record_diagnostics: false,
        }
    }

    pub fn validate(&self, steps: usize, dim: usize) -> Result<()> {
        if !(self.weight_scale >= 0.0 && self.weight_scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weight_scale must be nonnegative, got {}",
                self.weight_scale
            )));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter("n_samples must be at least 1".into()));
        }
        if let Init::FixedPoints(points) = &self.init {
            if points.is_empty() {
                return Err(Error::InvalidParameter("fixed-point init needs at least one point".into()));
            }
            for p in points {
                crate::field::check_dim(dim, p)?;
            }
        }
        self.gc.validate(steps)
    }
}

/// The fields a run may draw on. Which ones are required depends on the
/// guidance mode.
#[derive(Clone)]
pub struct FieldSet {
    /// Unconditional data denoiser.
    pub data: DenoiserField,
    pub unsafe_hat: Option<DenoiserField>,
    pub beta: Option<WeightEvaluator>,
    /// Denoiser under the positive condition.
    pub positive: Option<DenoiserField>,
    /// Denoiser under the filtered positive condition.
    pub modified: Option<DenoiserField>,
    /// Denoiser under the predefined unsafe condition.
    pub negative: Option<DenoiserField>,
}

impl FieldSet {
    pub fn new(data: DenoiserField) -> Self {
        Self {
            data,
            unsafe_hat: None,
            beta: None,
            positive: None,
            modified: None,
            negative: None,
        }
    }
}

fn need<T: Clone>(f: &Option<T>, name: &'static str) -> Result<T> {
    f.clone().ok_or(Error::MissingField(name))
}

/// Builds the `x_{0|t}` predictor for the configured mode. The safe term
/// uses `η · weight_scale` as its scale.
pub fn build_predictor(rc: &RunConfig, fields: &FieldSet, ds: Option<&Arc<UnsafeDataset>>) -> Result<DenoiserField> {
    let lam = rc.gc.lambda;
    let data = fields.data.clone();
    let safe = || -> Result<DenoiserField> {
        let mut gc = rc.gc.clone();
        gc.eta *= rc.weight_scale;
        safe_compose(data.clone(), need(&fields.unsafe_hat, "unsafe_hat")?, need(&fields.beta, "beta")?, &gc)
    };
    match rc.mode {
        GuidanceMode::Baseline => Ok(data.clone()),
        GuidanceMode::Cfg => cfg(data.clone(), need(&fields.positive, "positive")?, lam),
        GuidanceMode::NegativeGuidance => negative_guidance(
            data.clone(),
            need(&fields.positive, "positive")?,
            need(&fields.negative, "negative")?,
            lam,
        ),
        GuidanceMode::Sld => sld(
            data.clone(),
            need(&fields.positive, "positive")?,
            need(&fields.negative, "negative")?,
            lam,
            &rc.gc,
        ),
        GuidanceMode::Safree => safree_term(data.clone(), need(&fields.modified, "modified")?, lam),
        GuidanceMode::Safe => safe(),
        GuidanceMode::SafreeSafe => combine_safree_ours(safe()?, data.clone(), need(&fields.modified, "modified")?, lam),
        GuidanceMode::SldSafe => combine_sld_ours(
            safe()?,
            data.clone(),
            need(&fields.positive, "positive")?,
            need(&fields.negative, "negative")?,
            lam,
            &rc.gc,
        ),
        GuidanceMode::SparseRepellency => {
            let ds = ds.ok_or(Error::MissingField("dataset"))?;
            sparse_repellency(data.clone(), ds.clone(), rc.gc.sr_radius)
        }
    }
}

fn check_step_sigma(s: &NoiseSchedule, t: usize) -> Result<()> {
    if t == 0 || t > s.steps() {
        return Err(Error::StepOutOfRange { step: t, max: s.steps() });
    }
    if s.sigma(t) == 0.0 {
        return Err(Error::DegenerateKernel { step: t });
    }
    Ok(())
}

/// Deterministic DDIM update from `t` to `t − 1`.
pub fn ddim_step(s: &NoiseSchedule, t: usize, x_t: &Point, x0_pred: &Point) -> Result<Point> {
    check_step_sigma(s, t)?;
    if t == 1 {
        return Ok(x0_pred.clone());
    }
    let (a, sg) = (s.alpha(t), s.sigma(t));
    let (ap, sp) = (s.alpha(t - 1), s.sigma(t - 1));
    Ok(x0_pred.zip_map(x_t, |x0, xt| {
        let eps = (xt - a * x0) / sg;
        ap * x0 + sp * eps
    }))
}

/// Coefficients `(c_x0, c_xt, std)` of the ancestral posterior
/// `q(x_{t−1} | x_t, x_0)` for a variance-preserving schedule.
pub fn ddpm_coefficients(s: &NoiseSchedule, t: usize) -> Result<(f64, f64, f64)> {
    check_step_sigma(s, t)?;
    for k in [t - 1, t] {
        let v = s.alpha(k).powi(2) + s.sigma(k).powi(2);
        if (v - 1.0).abs() > 1e-12 {
            return Err(Error::NonVpSchedule { step: k, value: v });
        }
    }
    let (a, sg) = (s.alpha(t), s.sigma(t));
    let (ap, sp) = (s.alpha(t - 1), s.sigma(t - 1));
    let ratio = a / ap;
    let beta = 1.0 - ratio * ratio;
    let var_t = sg * sg;
    let c_x0 = ap * beta / var_t;
    let c_xt = ratio * sp * sp / var_t;
    let std = (beta * sp * sp / var_t).max(0.0).sqrt();
    Ok((c_x0, c_xt, std))
}

/// Ancestral DDPM update with an externally supplied standard-normal draw.
pub fn ddpm_step(s: &NoiseSchedule, t: usize, x_t: &Point, x0_pred: &Point, noise: &Point) -> Result<Point> {
    let (c_x0, c_xt, std) = ddpm_coefficients(s, t)?;
    if t == 1 {
        return Ok(x0_pred.clone());
    }
    let mut out = x0_pred * c_x0;
    out.axpy(c_xt, x_t, 1.0);
    out.axpy(std, noise, 1.0);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostic {
    pub step: usize,
    pub beta: f64,
    pub gate_open: bool,
    pub applied_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub samples: Vec<Point>,
    /// Per sample, `x_T, …, x_0`.
    pub trajectories: Option<Vec<Vec<Point>>>,
    /// Per sample, one record per critical step, in sampling order.
    pub diagnostics: Vec<Vec<StepDiagnostic>>,
}

struct SampleOutput {
    sample: Point,
    trajectory: Option<Vec<Point>>,
    diagnostics: Vec<StepDiagnostic>,
}

fn standard_normal(rng: &mut ChaCha12Rng, d: usize) -> Point {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

fn run_one(
    rc: &RunConfig,
    s: &NoiseSchedule,
    predictor: &DenoiserField,
    index: usize,
) -> Result<SampleOutput> {
    let d = predictor.dim();
    let mut rng = stream_rng(rc.seed, index as u64);
    let mut x = match &rc.init {
        Init::StandardNormal => standard_normal(&mut rng, d),
        Init::FixedPoints(points) => points[index % points.len()].clone(),
    };
    let steps = s.steps();
    let mut trajectory = rc.record_trajectories.then(|| {
        let mut v = Vec::with_capacity(steps + 1);
        v.push(x.clone());
        v
    });
    let mut diagnostics = Vec::new();
    for t in (1..=steps).rev() {
        let mut trace = Trace::default();
        let x0 = predictor.denoise_traced(&x, t, &mut trace)?;
        if rc.record_diagnostics && rc.gc.critical_steps.contains(t) {
            if let Some(g) = trace.gate {
                diagnostics.push(StepDiagnostic {
                    step: t,
                    beta: g.beta,
                    gate_open: g.gate_open,
                    applied_weight: g.applied_weight,
                });
            }
        }
        x = match rc.solver {
            Solver::Ddim => ddim_step(s, t, &x, &x0)?,
            Solver::Ddpm => {
                let noise = standard_normal(&mut rng, d);
                ddpm_step(s, t, &x, &x0, &noise)?
            }
        };
        if let Some(tr) = trajectory.as_mut() {
            tr.push(x.clone());
        }
    }
    Ok(SampleOutput {
        sample: x,
        trajectory,
        diagnostics,
    })
}

/// Runs the full sampling loop for every sample: predict `x_{0|t}` with the
/// configured composition, then take one solver step, for `t = T, …, 1`.
pub fn run_algorithm1(
    rc: &RunConfig,
    s: &NoiseSchedule,
    fields: &FieldSet,
    ds: Option<&Arc<UnsafeDataset>>,
) -> Result<RunResult> {
    let predictor = build_predictor(rc, fields, ds)?;
    run_with_predictor(rc, s, &predictor)
}

/// Sampling loop with an already-assembled predictor.
pub fn run_with_predictor(rc: &RunConfig, s: &NoiseSchedule, predictor: &DenoiserField) -> Result<RunResult> {
    rc.validate(s.steps(), predictor.dim())?;
    if rc.solver == Solver::Ddpm {
        s.ensure_variance_preserving()?;
    }
    let outputs: Vec<SampleOutput> = (0..rc.n_samples)
        .into_par_iter()
        .map(|i| run_one(rc, s, predictor, i))
        .collect::<Result<_>>()?;
    let mut samples = Vec::with_capacity(outputs.len());
    let mut trajectories = rc.record_trajectories.then(Vec::new);
    let mut diagnostics = Vec::with_capacity(outputs.len());
    for o in outputs {
        samples.push(o.sample);
        if let (Some(all), Some(tr)) = (trajectories.as_mut(), o.trajectory) {
            all.push(tr);
        }
        diagnostics.push(o.diagnostics);
    }
    Ok(RunResult {
        samples,
        trajectories,
        diagnostics,
    })
}
