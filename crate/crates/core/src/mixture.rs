//! Gaussian-mixture data distributions and their closed-form diffusion
//! quantities: diffused marginals, posterior-mean denoisers and the exact
//! safe/unsafe likelihood-ratio weight β*.
//!
//! The safe/unsafe split is made at the component level: `p_safe` and
//! `p_unsafe` are the renormalized sub-mixtures over the safe and unsafe
//! component sets, so `p_data = Z_safe·p_safe + Z_unsafe·p_unsafe` holds
//! exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::field::{check_dim, Denoiser, DenoiserField, Point, Trace, WeightEvaluator, WeightField};
use crate::numeric::{apply_safe_term, log_sum_exp, softmax_in_place};
use crate::schedule::NoiseSchedule;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<Point>,
    covariances: Vec<DMatrix<f64>>,
    // lower Cholesky factors of the covariances
    chol: Vec<DMatrix<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Point>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::InvalidParameter(format!(
                "mixture has {k} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!("weight {i} must be positive, got {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!("weights sum to {total}, expected 1")));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        let mut chol = Vec::with_capacity(k);
        for (i, (m, c)) in means.iter().zip(&covariances).enumerate() {
            check_dim(dim, m)?;
            if c.nrows() != dim || c.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.nrows().max(c.ncols()),
                });
            }
            let scale = c.amax().max(1.0);
            if (c - c.transpose()).amax() > 1e-12 * scale {
                return Err(Error::NotPositiveDefinite { component: i });
            }
            let l = Cholesky::new(c.clone())
                .ok_or(Error::NotPositiveDefinite { component: i })?
                .unpack();
            chol.push(l);
        }
        Ok(Self {
            dim,
            weights,
            means,
            covariances,
            chol,
        })
    }

    /// Isotropic components `N(μ_k, var_k I)`.
    pub fn isotropic(weights: Vec<f64>, means: Vec<Point>, variances: &[f64]) -> Result<Self> {
        let d = means.first().map_or(0, |m| m.len());
        let covs = variances.iter().map(|v| DMatrix::identity(d, d) * *v).collect();
        Self::new(weights, means, covs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Point] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    /// Renormalized mixture over the given components.
    pub fn sub_mixture(&self, components: &[usize]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("sub-mixture needs at least one component".into()));
        }
        for &k in components {
            if k >= self.n_components() {
                return Err(Error::InvalidParameter(format!(
                    "component {k} out of range (K = {})",
                    self.n_components()
                )));
            }
        }
        let z: f64 = components.iter().map(|&k| self.weights[k]).sum();
        let weights: Vec<f64> = components.iter().map(|&k| self.weights[k] / z).collect();
        // renormalize again so the sum is exact to rounding
        let s: f64 = weights.iter().sum();
        Ok(Self {
            dim: self.dim,
            weights: weights.into_iter().map(|w| w / s).collect(),
            means: components.iter().map(|&k| self.means[k].clone()).collect(),
            covariances: components.iter().map(|&k| self.covariances[k].clone()).collect(),
            chol: components.iter().map(|&k| self.chol[k].clone()).collect(),
        })
    }

    /// `log w_k + log N(x; μ_k, Σ_k)` for every component.
    pub fn component_log_densities(&self, x: &Point) -> Result<Vec<f64>> {
        check_dim(self.dim, x)?;
        Ok((0..self.n_components())
            .map(|k| {
                let r = x - &self.means[k];
                self.weights[k].ln() + gaussian_log_density(&self.chol[k], &r)
            })
            .collect())
    }

    pub fn log_density(&self, x: &Point) -> Result<f64> {
        Ok(log_sum_exp(&self.component_log_densities(x)?))
    }

    /// One ancestral draw: component index and point.
    pub fn sample_with_component<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Point) {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut k = self.n_components() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        (k, &self.means[k] + &self.chol[k] * z)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.sample_with_component(rng).1
    }
}

/// Log density of `N(r; 0, L Lᵀ)` from the lower factor `L`.
fn gaussian_log_density(l: &DMatrix<f64>, r: &Point) -> f64 {
    let d = r.len();
    let mut quad = 0.0;
    let mut log_det = 0.0;
    let mut z = [0.0f64; MAX_STACK_DIM];
    let mut heap;
    let z: &mut [f64] = if d <= MAX_STACK_DIM {
        &mut z[..d]
    } else {
        heap = vec![0.0; d];
        &mut heap
    };
    forward_substitute(l, r.as_slice(), z);
    for i in 0..d {
        quad += z[i] * z[i];
        log_det += l[(i, i)].ln();
    }
    -0.5 * d as f64 * (2.0 * PI).ln() - log_det - 0.5 * quad
}

const MAX_STACK_DIM: usize = 16;

/// Solves `L z = r` for lower-triangular `L`.
fn forward_substitute(l: &DMatrix<f64>, r: &[f64], z: &mut [f64]) {
    let d = r.len();
    for i in 0..d {
        let mut acc = r[i];
        for j in 0..i {
            acc -= l[(i, j)] * z[j];
        }
        z[i] = acc / l[(i, i)];
    }
}

/// Component-level split of a mixture into safe and unsafe parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyPartition {
    unsafe_flags: Vec<bool>,
    z_safe: f64,
    z_unsafe: f64,
}

impl SafetyPartition {
    pub fn new(gm: &GaussianMixture, unsafe_components: &[usize]) -> Result<Self> {
        let mut flags = vec![false; gm.n_components()];
        for &k in unsafe_components {
            if k >= flags.len() {
                return Err(Error::InvalidParameter(format!(
                    "unsafe component {k} out of range (K = {})",
                    flags.len()
                )));
            }
            flags[k] = true;
        }
        let (mut z_safe, mut z_unsafe) = (0.0, 0.0);
        for (w, u) in gm.weights().iter().zip(&flags) {
            if *u {
                z_unsafe += w;
            } else {
                z_safe += w;
            }
        }
        Ok(Self {
            unsafe_flags: flags,
            z_safe,
            z_unsafe,
        })
    }

    pub fn z_safe(&self) -> f64 {
        self.z_safe
    }

    pub fn z_unsafe(&self) -> f64 {
        self.z_unsafe
    }

    pub fn is_unsafe(&self, component: usize) -> bool {
        self.unsafe_flags[component]
    }

    pub fn n_components(&self) -> usize {
        self.unsafe_flags.len()
    }

    pub fn unsafe_components(&self) -> Vec<usize> {
        (0..self.unsafe_flags.len()).filter(|&k| self.unsafe_flags[k]).collect()
    }

    pub fn safe_components(&self) -> Vec<usize> {
        (0..self.unsafe_flags.len()).filter(|&k| !self.unsafe_flags[k]).collect()
    }

    /// Normalized safe sub-mixture `p_safe`.
    pub fn safe_mixture(&self, gm: &GaussianMixture) -> Result<GaussianMixture> {
        let idx = self.safe_components();
        if idx.is_empty() {
            return Err(Error::UndefinedPartition("no safe components (Z_safe = 0)".into()));
        }
        gm.sub_mixture(&idx)
    }

    /// Normalized unsafe sub-mixture `p_unsafe`.
    pub fn unsafe_mixture(&self, gm: &GaussianMixture) -> Result<GaussianMixture> {
        let idx = self.unsafe_components();
        if idx.is_empty() {
            return Err(Error::UndefinedPartition("no unsafe components (Z_unsafe = 0)".into()));
        }
        gm.sub_mixture(&idx)
    }
}

/// Marginal of the forward process at step `t`: components become
/// `N(α_t μ_k, α_t² Σ_k + σ_t² I)` with unchanged weights.
pub fn diffuse(gm: &GaussianMixture, s: &NoiseSchedule, t: usize) -> Result<GaussianMixture> {
    s.check_step(t)?;
    let (a, sig) = (s.alpha(t), s.sigma(t));
    let d = gm.dim();
    let means = gm.means().iter().map(|m| m * a).collect();
    let covs = gm
        .covariances()
        .iter()
        .map(|c| c * (a * a) + DMatrix::identity(d, d) * (sig * sig))
        .collect();
    GaussianMixture::new(gm.weights().to_vec(), means, covs)
}

/// `log p_t(x_t)` for the diffused mixture, via log-sum-exp.
pub fn log_marginal(gm: &GaussianMixture, s: &NoiseSchedule, t: usize, x_t: &Point) -> Result<f64> {
    s.check_step(t)?;
    check_dim(gm.dim(), x_t)?;
    let step = StepComponents::new(gm, s.alpha(t), s.sigma(t))?;
    Ok(step.log_marginal(x_t.as_slice()))
}

#[derive(Debug, Clone)]
struct ComponentAtStep {
    log_weight: f64,
    mean: Point,
    shifted_mean: Point,
    chol: DMatrix<f64>,
    log_norm: f64,
    // α_t Σ_k (α_t² Σ_k + σ_t² I)^{-1}
    gain: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct StepComponents {
    comps: Vec<ComponentAtStep>,
}

impl StepComponents {
    fn new(gm: &GaussianMixture, alpha: f64, sigma: f64) -> Result<Self> {
        let d = gm.dim();
        let mut comps = Vec::with_capacity(gm.n_components());
        for k in 0..gm.n_components() {
            let cov = &gm.covariances()[k];
            let diffused = cov * (alpha * alpha) + DMatrix::identity(d, d) * (sigma * sigma);
            let chol = Cholesky::new(diffused).ok_or(Error::NotPositiveDefinite { component: k })?;
            let gain = (chol.solve(&(cov * alpha))).transpose();
            let l = chol.unpack();
            let log_det: f64 = (0..d).map(|i| l[(i, i)].ln()).sum();
            comps.push(ComponentAtStep {
                log_weight: gm.weights()[k].ln(),
                mean: gm.means()[k].clone(),
                shifted_mean: &gm.means()[k] * alpha,
                chol: l,
                log_norm: -0.5 * d as f64 * (2.0 * PI).ln() - log_det,
                gain,
            });
        }
        Ok(Self { comps })
    }

    fn log_terms(&self, x: &[f64], out: &mut Vec<f64>) {
        let d = x.len();
        let mut r = [0.0f64; MAX_STACK_DIM];
        let mut z = [0.0f64; MAX_STACK_DIM];
        let (mut rh, mut zh);
        let (r, z): (&mut [f64], &mut [f64]) = if d <= MAX_STACK_DIM {
            (&mut r[..d], &mut z[..d])
        } else {
            rh = vec![0.0; d];
            zh = vec![0.0; d];
            (&mut rh, &mut zh)
        };
        out.clear();
        for c in &self.comps {
            for i in 0..d {
                r[i] = x[i] - c.shifted_mean[i];
            }
            forward_substitute(&c.chol, r, z);
            let quad: f64 = z.iter().map(|v| v * v).sum();
            out.push(c.log_weight + c.log_norm - 0.5 * quad);
        }
    }

    fn log_marginal(&self, x: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.comps.len());
        self.log_terms(x, &mut terms);
        log_sum_exp(&terms)
    }

    fn posterior_mean(&self, x: &[f64]) -> Point {
        let d = x.len();
        let mut terms = Vec::with_capacity(self.comps.len());
        self.log_terms(x, &mut terms);
        softmax_in_place(&mut terms);
        let mut out = DVector::zeros(d);
        let mut r = vec![0.0; d];
        for (c, &resp) in self.comps.iter().zip(&terms) {
            if resp == 0.0 {
                continue;
            }
            for i in 0..d {
                r[i] = x[i] - c.shifted_mean[i];
            }
            for i in 0..d {
                let mut m = c.mean[i];
                for j in 0..d {
                    m += c.gain[(i, j)] * r[j];
                }
                out[i] += resp * m;
            }
        }
        out
    }
}

/// Per-step component caches for a mixture under a fixed schedule.
#[derive(Debug, Clone)]
pub struct DiffusedMixture {
    dim: usize,
    steps: Vec<StepComponents>,
}

impl DiffusedMixture {
    pub fn new(gm: &GaussianMixture, s: &NoiseSchedule) -> Result<Self> {
        let steps = (0..=s.steps())
            .map(|t| StepComponents::new(gm, s.alpha(t), s.sigma(t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim: gm.dim(), steps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn step(&self, t: usize) -> Result<&StepComponents> {
        self.steps.get(t).ok_or(Error::StepOutOfRange {
            step: t,
            max: self.steps.len() - 1,
        })
    }

    pub fn log_marginal(&self, t: usize, x_t: &Point) -> Result<f64> {
        check_dim(self.dim, x_t)?;
        Ok(self.step(t)?.log_marginal(x_t.as_slice()))
    }

    /// `E[x | x_t]`; returns `x_t` unchanged at `t = 0`.
    pub fn posterior_mean(&self, t: usize, x_t: &Point) -> Result<Point> {
        check_dim(self.dim, x_t)?;
        let step = self.step(t)?;
        if t == 0 {
            return Ok(x_t.clone());
        }
        Ok(step.posterior_mean(x_t.as_slice()))
    }
}

/// Closed-form posterior-mean denoiser of a Gaussian mixture.
pub struct ExactDenoiser {
    label: String,
    cache: Arc<DiffusedMixture>,
}

impl ExactDenoiser {
    pub fn new(gm: &GaussianMixture, s: &NoiseSchedule, label: impl Into<String>) -> Result<Self> {
        Ok(Self {
            label: label.into(),
            cache: Arc::new(DiffusedMixture::new(gm, s)?),
        })
    }
}

impl Denoiser for ExactDenoiser {
    fn dim(&self) -> usize {
        self.cache.dim()
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn denoise_traced(&self, x_t: &Point, t: usize, _trace: &mut Trace) -> Result<Point> {
        self.cache.posterior_mean(t, x_t)
    }
}

/// `E[x | x_t]` for the mixture as a denoiser field.
pub fn exact_denoiser(gm: &GaussianMixture, s: &NoiseSchedule) -> Result<DenoiserField> {
    Ok(Arc::new(ExactDenoiser::new(gm, s, "exact")?))
}

/// Exact weight `β*(x_t) = Z_unsafe p_unsafe,t(x_t) / (Z_safe p_safe,t(x_t))`.
pub struct ExactBetaStar {
    safe: DiffusedMixture,
    unsafe_: Option<DiffusedMixture>,
    log_z_ratio: f64,
}

impl ExactBetaStar {
    pub fn new(gm: &GaussianMixture, part: &SafetyPartition, s: &NoiseSchedule) -> Result<Self> {
        if part.z_safe() <= 0.0 || part.safe_components().is_empty() {
            return Err(Error::UndefinedPartition("Z_safe = 0".into()));
        }
        let safe = DiffusedMixture::new(&part.safe_mixture(gm)?, s)?;
        let unsafe_ = if part.unsafe_components().is_empty() {
            None
        } else {
            Some(DiffusedMixture::new(&part.unsafe_mixture(gm)?, s)?)
        };
        Ok(Self {
            safe,
            unsafe_,
            log_z_ratio: part.z_unsafe().ln() - part.z_safe().ln(),
        })
    }

    pub fn log_beta(&self, x_t: &Point, t: usize) -> Result<f64> {
        let Some(unsafe_) = &self.unsafe_ else {
            return Ok(f64::NEG_INFINITY);
        };
        Ok(self.log_z_ratio + unsafe_.log_marginal(t, x_t)? - self.safe.log_marginal(t, x_t)?)
    }
}

impl WeightField for ExactBetaStar {
    fn weight(&self, x_t: &Point, t: usize) -> Result<f64> {
        Ok(self.log_beta(x_t, t)?.exp())
    }
}

/// One-shot evaluation of β* at `(t, x_t)`.
pub fn exact_beta_star(
    gm: &GaussianMixture,
    part: &SafetyPartition,
    s: &NoiseSchedule,
    t: usize,
    x_t: &Point,
) -> Result<f64> {
    s.check_step(t)?;
    if part.z_safe() <= 0.0 || part.safe_components().is_empty() {
        return Err(Error::UndefinedPartition("Z_safe = 0".into()));
    }
    if part.unsafe_components().is_empty() {
        return Ok(0.0);
    }
    let lu = log_marginal(&part.unsafe_mixture(gm)?, s, t, x_t)?;
    let ls = log_marginal(&part.safe_mixture(gm)?, s, t, x_t)?;
    Ok((part.z_unsafe().ln() + lu - part.z_safe().ln() - ls).exp())
}

pub fn exact_beta_evaluator(
    gm: &GaussianMixture,
    part: &SafetyPartition,
    s: &NoiseSchedule,
) -> Result<WeightEvaluator> {
    Ok(Arc::new(ExactBetaStar::new(gm, part, s)?))
}

struct SafeExact {
    data: DenoiserField,
    unsafe_: DenoiserField,
    beta: WeightEvaluator,
}

impl Denoiser for SafeExact {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn label(&self) -> &str {
        "safe-exact"
    }

    fn denoise_traced(&self, x_t: &Point, t: usize, trace: &mut Trace) -> Result<Point> {
        let e = self.data.denoise_traced(x_t, t, trace)?;
        let b = self.beta.weight(x_t, t)?;
        if b == 0.0 {
            return Ok(e);
        }
        let u = self.unsafe_.denoise_traced(x_t, t, trace)?;
        Ok(apply_safe_term(e, &u, b))
    }
}

/// `E_data + β*·(E_data − E_unsafe)`.
pub fn compose_safe_exact(
    data: DenoiserField,
    unsafe_: DenoiserField,
    beta_star: WeightEvaluator,
) -> Result<DenoiserField> {
    crate::field::check_same_dim(&[&data, &unsafe_])?;
    Ok(Arc::new(SafeExact {
        data,
        unsafe_,
        beta: beta_star,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{make_schedule, ScheduleParams};
    use nalgebra::dvector;

    fn sched() -> NoiseSchedule {
        make_schedule(100, ScheduleParams::VpLinear { beta_min: 1e-3, beta_max: 0.1 }).unwrap()
    }

    fn symmetric() -> GaussianMixture {
        GaussianMixture::isotropic(vec![0.5, 0.5], vec![dvector![1.5, 0.5], dvector![-1.5, -0.5]], &[0.3, 0.3])
            .unwrap()
    }

    #[test]
    fn rejects_bad_weights() {
        let m = vec![dvector![0.0], dvector![1.0]];
        assert!(GaussianMixture::isotropic(vec![0.5, 0.499], m.clone(), &[1.0, 1.0]).is_err());
        assert!(GaussianMixture::isotropic(vec![1.0, 0.0], m.clone(), &[1.0, 1.0]).is_err());
        assert!(GaussianMixture::isotropic(vec![0.5, 0.5], m, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn rejects_asymmetric_covariance() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let err = GaussianMixture::new(vec![1.0], vec![dvector![0.0, 0.0]], vec![c]).unwrap_err();
        assert_eq!(err, Error::NotPositiveDefinite { component: 0 });
    }

    #[test]
    fn diffuse_identity_at_zero() {
        let s = sched();
        let gm = symmetric();
        assert_eq!(diffuse(&gm, &s, 0).unwrap(), gm);
    }

    #[test]
    fn diffuse_standard_normal_fixed_point() {
        let s = sched();
        let gm = GaussianMixture::isotropic(vec![1.0], vec![dvector![0.0, 0.0]], &[1.0]).unwrap();
        for t in [1, 37, 100] {
            let g = diffuse(&gm, &s, t).unwrap();
            assert!(g.means()[0].amax() == 0.0);
            assert!((&g.covariances()[0] - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        }
    }

    #[test]
    fn log_marginal_single_component_at_mean() {
        let s = sched();
        let cov = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let mu = dvector![0.7, -0.2];
        let gm = GaussianMixture::new(vec![1.0], vec![mu.clone()], vec![cov.clone()]).unwrap();
        let t = 40;
        let (a, sg) = (s.alpha(t), s.sigma(t));
        let sd = &cov * (a * a) + DMatrix::identity(2, 2) * (sg * sg);
        let expected = -(2.0 * PI).ln() - 0.5 * sd.determinant().ln();
        let got = log_marginal(&gm, &s, t, &(&mu * a)).unwrap();
        assert!((got - expected).abs() < 1e-13);
    }

    #[test]
    fn log_marginal_symmetric_origin() {
        let s = sched();
        let gm = symmetric();
        let t = 30;
        let x = dvector![0.0, 0.0];
        let one = gm.sub_mixture(&[0]).unwrap();
        let a = log_marginal(&gm, &s, t, &x).unwrap();
        let b = log_marginal(&one, &s, t, &x).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn standard_normal_posterior_mean() {
        let s = NoiseSchedule::from_coefficients(vec![1.0, 0.8, 0.6], vec![0.0, 0.6, 0.8]).unwrap();
        let gm = GaussianMixture::isotropic(vec![1.0], vec![dvector![0.0, 0.0]], &[1.0]).unwrap();
        let e = exact_denoiser(&gm, &s).unwrap();
        let out = e.denoise(&dvector![1.0, 0.0], 1).unwrap();
        assert!((out - dvector![0.8, 0.0]).amax() < 1e-15);
    }

    #[test]
    fn symmetric_denoiser_at_origin() {
        let s = sched();
        let e = exact_denoiser(&symmetric(), &s).unwrap();
        let out = e.denoise(&dvector![0.0, 0.0], 50).unwrap();
        assert!(out.amax() < 1e-15);
    }

    #[test]
    fn denoiser_identity_at_step_zero() {
        let s = sched();
        let e = exact_denoiser(&symmetric(), &s).unwrap();
        let x = dvector![0.3, 9.0];
        assert_eq!(e.denoise(&x, 0).unwrap(), x);
    }

    #[test]
    fn beta_star_cases() {
        let s = sched();
        let gm = symmetric();
        let none = SafetyPartition::new(&gm, &[]).unwrap();
        assert_eq!(exact_beta_star(&gm, &none, &s, 20, &dvector![0.4, 0.1]).unwrap(), 0.0);
        let part = SafetyPartition::new(&gm, &[0]).unwrap();
        let b = exact_beta_star(&gm, &part, &s, 20, &dvector![0.0, 0.0]).unwrap();
        assert!((b - 1.0).abs() < 1e-13);
        let all = SafetyPartition::new(&gm, &[0, 1]).unwrap();
        assert!(matches!(
            exact_beta_star(&gm, &all, &s, 20, &dvector![0.0, 0.0]),
            Err(Error::UndefinedPartition(_))
        ));
        let cached = ExactBetaStar::new(&gm, &part, &s).unwrap();
        let x = dvector![0.9, -0.4];
        let a = cached.weight(&x, 33).unwrap();
        let b = exact_beta_star(&gm, &part, &s, 33, &x).unwrap();
        assert!((a - b).abs() <= 1e-13 * b);
    }

    #[test]
    fn partition_masses() {
        let gm = GaussianMixture::isotropic(
            vec![0.2, 0.3, 0.5],
            vec![dvector![0.0], dvector![1.0], dvector![2.0]],
            &[1.0, 1.0, 1.0],
        )
        .unwrap();
        let p = SafetyPartition::new(&gm, &[1]).unwrap();
        assert!((p.z_safe() - 0.7).abs() < 1e-15);
        assert!((p.z_safe() + p.z_unsafe() - 1.0).abs() < 1e-12);
        assert_eq!(p.safe_components(), vec![0, 2]);
        assert!(SafetyPartition::new(&gm, &[3]).is_err());
    }

    #[test]
    fn compose_collapses_with_zero_weight() {
        let s = sched();
        let gm = symmetric();
        let data = exact_denoiser(&gm, &s).unwrap();
        let other = exact_denoiser(&gm.sub_mixture(&[0]).unwrap(), &s).unwrap();
        let zero: WeightEvaluator = Arc::new(|_: &Point, _: usize| Ok(0.0));
        let f = compose_safe_exact(data.clone(), other, zero).unwrap();
        let x = dvector![0.2, -0.7];
        assert_eq!(f.denoise(&x, 10).unwrap(), data.denoise(&x, 10).unwrap());
    }

    #[test]
    fn compose_far_from_unsafe_mass() {
        let s = sched();
        let gm = symmetric();
        let part = SafetyPartition::new(&gm, &[0]).unwrap();
        let data = exact_denoiser(&gm, &s).unwrap();
        let uns = exact_denoiser(&part.unsafe_mixture(&gm).unwrap(), &s).unwrap();
        let beta = exact_beta_evaluator(&gm, &part, &s).unwrap();
        let f = compose_safe_exact(data.clone(), uns, beta.clone()).unwrap();
        let x = dvector![-3.0, -1.0];
        let t = 5;
        assert!(beta.weight(&x, t).unwrap() < 1e-12);
        assert!((f.denoise(&x, t).unwrap() - data.denoise(&x, t).unwrap()).amax() < 1e-10);
    }

    #[test]
    fn classification_log_densities_match_log_marginal_at_zero() {
        let s = sched();
        let gm = symmetric();
        let x = dvector![0.4, 1.1];
        let a = gm.log_density(&x).unwrap();
        let b = log_marginal(&gm, &s, 0, &x).unwrap();
        assert!((a - b).abs() < 1e-13);
    }
}
