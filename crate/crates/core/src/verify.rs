//! Randomized and Monte-Carlo checks: the safe-denoiser identity
//! `E_safe = E_data + β*(E_data − E_unsafe)`, the mixture decomposition
//! `p_data,t = Z_safe p_safe,t + Z_unsafe p_unsafe,t`, and the behaviour of
//! the dataset-driven estimators against their closed forms.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::empirical::{empirical_beta, empirical_unsafe_denoiser, KernelConfig, UnsafeDataset};
use crate::error::{Error, Result};
use crate::field::Point;
use crate::mixture::{
    compose_safe_exact, exact_beta_evaluator, exact_denoiser, log_marginal, DiffusedMixture, GaussianMixture, SafetyPartition,
};
use crate::numeric::log_sum_exp;
use crate::sampler::stream_rng;
use crate::schedule::NoiseSchedule;

/// Random mixture with `k` components in `d` dimensions: means in
/// `[-2.5, 2.5]^d`, covariances `A Aᵀ/d + 0.05 I` with `A` standard normal
/// scaled into `[0.3, 1.0]`, Dirichlet(1) weights floored at 0.02.
pub fn random_mixture<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> Result<GaussianMixture> {
    let mut weights: Vec<f64> = (0..k).map(|_| 0.02 - rng.gen::<f64>().ln()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let means = (0..k)
        .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-2.5..2.5)))
        .collect();
    let covs = (0..k)
        .map(|_| {
            let scale: f64 = rng.gen_range(0.3..1.0);
            let a = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng)) * scale;
            let c = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.05;
            (&c + c.transpose()) * 0.5
        })
        .collect();
    GaussianMixture::new(weights, means, covs)
}

/// Random nonempty proper unsafe subset with `Z_safe ≥ min_z_safe`.
pub fn random_partition<R: Rng + ?Sized>(
    rng: &mut R,
    gm: &GaussianMixture,
    min_z_safe: f64,
) -> Result<SafetyPartition> {
    let k = gm.n_components();
    if k < 2 {
        return Err(Error::InvalidParameter("a proper partition needs at least two components".into()));
    }
    let best = 1.0 - gm.weights().iter().cloned().fold(f64::INFINITY, f64::min);
    if min_z_safe > best {
        return Err(Error::InvalidParameter(format!(
            "no partition reaches Z_safe ≥ {min_z_safe}; the largest is {best}"
        )));
    }
    loop {
        let mut idx: Vec<usize> = (0..k).collect();
        idx.shuffle(rng);
        let n_unsafe = rng.gen_range(1..k);
        let chosen = &idx[..n_unsafe];
        let part = SafetyPartition::new(gm, chosen)?;
        if part.z_safe() >= min_z_safe {
            return Ok(part);
        }
    }
}

fn forward_point<R: Rng + ?Sized>(rng: &mut R, source: &GaussianMixture, s: &NoiseSchedule, t: usize) -> Point {
    let x = source.sample(rng);
    let eps = DVector::from_fn(source.dim(), |_, _| StandardNormal.sample(rng));
    x * s.alpha(t) + eps * s.sigma(t)
}

/// Evaluation points `(t, x_t)`: `t` uniform on `1..=T` and
/// `x_t = α_t x + σ_t ε` with `x` drawn from `source`.
pub fn forward_grid<R: Rng + ?Sized>(
    rng: &mut R,
    source: &GaussianMixture,
    s: &NoiseSchedule,
    n: usize,
) -> Vec<(usize, Point)> {
    (0..n)
        .map(|_| {
            let t = rng.gen_range(1..=s.steps());
            (t, forward_point(rng, source, s, t))
        })
        .collect()
}

/// Like [`forward_grid`] but cycling through the given steps.
pub fn forward_grid_at<R: Rng + ?Sized>(
    rng: &mut R,
    source: &GaussianMixture,
    s: &NoiseSchedule,
    steps: &[usize],
    n: usize,
) -> Vec<(usize, Point)> {
    (0..n)
        .map(|i| {
            let t = steps[i % steps.len()];
            (t, forward_point(rng, source, s, t))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResiduals {
    /// `max ‖composed − E_safe‖ / max(‖E_safe‖, 1)` over the grid.
    pub theorem: f64,
    /// `max |p_data,t / (Z_s p_safe,t + Z_u p_unsafe,t) − 1|` over the grid.
    pub decomposition: f64,
}

/// Compares the composed safe denoiser against the closed-form denoiser of
/// the safe sub-mixture at every grid point.
pub fn identity_residuals(
    gm: &GaussianMixture,
    part: &SafetyPartition,
    s: &NoiseSchedule,
    grid: &[(usize, Point)],
) -> Result<IdentityResiduals> {
    let safe_gm = part.safe_mixture(gm)?;
    let unsafe_gm = part.unsafe_mixture(gm)?;
    let composed = compose_safe_exact(
        exact_denoiser(gm, s)?,
        exact_denoiser(&unsafe_gm, s)?,
        exact_beta_evaluator(gm, part, s)?,
    )?;
    let oracle = exact_denoiser(&safe_gm, s)?;

    let data_m = DiffusedMixture::new(gm, s)?;
    let safe_m = DiffusedMixture::new(&safe_gm, s)?;
    let unsafe_m = DiffusedMixture::new(&unsafe_gm, s)?;
    let (lzs, lzu) = (part.z_safe().ln(), part.z_unsafe().ln());

    let mut out = IdentityResiduals {
        theorem: 0.0,
        decomposition: 0.0,
    };
    for (t, x) in grid {
        let a = composed.denoise(x, *t)?;
        let b = oracle.denoise(x, *t)?;
        let rel = (&a - &b).norm() / b.norm().max(1.0);
        out.theorem = out.theorem.max(rel);

        let lhs = data_m.log_marginal(*t, x)?;
        let rhs = log_sum_exp(&[lzs + safe_m.log_marginal(*t, x)?, lzu + unsafe_m.log_marginal(*t, x)?]);
        out.decomposition = out.decomposition.max((lhs - rhs).exp_m1().abs());
    }
    Ok(out)
}

/// Root-mean-square deviation of the empirical unsafe denoiser, built from
/// `m` draws of `unsafe_gm`, from the exact unsafe denoiser over `grid`.
/// Averages squared error over `replicates` independent datasets; dataset
/// `r` uses RNG stream `r` of `seed`.
pub fn empirical_denoiser_rms(
    unsafe_gm: &GaussianMixture,
    s: &Arc<NoiseSchedule>,
    grid: &[(usize, Point)],
    m: usize,
    replicates: usize,
    seed: u64,
) -> Result<f64> {
    let exact = exact_denoiser(unsafe_gm, s)?;
    let truth: Vec<Point> = grid.iter().map(|(t, x)| exact.denoise(x, *t)).collect::<Result<_>>()?;
    let mut total = 0.0;
    for r in 0..replicates {
        let mut rng = stream_rng(seed, r as u64);
        let ds = Arc::new(UnsafeDataset::new((0..m).map(|_| unsafe_gm.sample(&mut rng)).collect())?);
        let field = empirical_unsafe_denoiser(ds, s.clone(), KernelConfig::Diffusion)?;
        for ((t, x), want) in grid.iter().zip(&truth) {
            total += (field.denoise(x, *t)? - want).norm_squared();
        }
    }
    Ok((total / (replicates * grid.len()) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaCheck {
    pub t: usize,
    pub x_t: Point,
    pub exact: f64,
    pub mean: f64,
    pub std_error: f64,
}

impl BetaCheck {
    /// `|mean − exact|` in units of the standard error.
    pub fn z_score(&self) -> f64 {
        (self.mean - self.exact).abs() / self.std_error
    }
}

/// Mean of `empirical_beta` over `datasets` independent datasets of `m`
/// draws each, against the closed-form `p_unsafe,t(x_t)` at every probe.
pub fn empirical_beta_check(
    unsafe_gm: &GaussianMixture,
    s: &NoiseSchedule,
    probes: &[(usize, Point)],
    m: usize,
    datasets: usize,
    seed: u64,
) -> Result<Vec<BetaCheck>> {
    let mut values = vec![Vec::with_capacity(datasets); probes.len()];
    for r in 0..datasets {
        let mut rng = stream_rng(seed, r as u64);
        let ds = UnsafeDataset::new((0..m).map(|_| unsafe_gm.sample(&mut rng)).collect())?;
        for ((t, x), v) in probes.iter().zip(values.iter_mut()) {
            v.push(empirical_beta(&ds, s, *t, x)?);
        }
    }
    probes
        .iter()
        .zip(values)
        .map(|((t, x), v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(BetaCheck {
                t: *t,
                x_t: x.clone(),
                exact: log_marginal(unsafe_gm, s, *t, x)?.exp(),
                mean,
                std_error: (var / n).sqrt(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceReport {
    pub index: u64,
    pub dim: usize,
    pub components: usize,
    pub unsafe_components: Vec<usize>,
    pub z_safe: f64,
    pub residuals: IdentityResiduals,
}

/// One randomized identity check: instance `index` draws a mixture with
/// `2..=max_components` components from RNG stream `index` of `seed`, a
/// partition with `Z_safe ≥ min_z_safe`, and `points` grid points from the
/// diffused safe sub-mixture.
pub fn check_random_instance(
    seed: u64,
    index: u64,
    dim: usize,
    max_components: usize,
    min_z_safe: f64,
    s: &NoiseSchedule,
    points: usize,
) -> Result<InstanceReport> {
    let mut rng = stream_rng(seed, index);
    let k = rng.gen_range(2..=max_components.max(2));
    let gm = random_mixture(&mut rng, dim, k)?;
    let part = random_partition(&mut rng, &gm, min_z_safe)?;
    let grid = forward_grid(&mut rng, &part.safe_mixture(&gm)?, s, points);
    Ok(InstanceReport {
        index,
        dim,
        components: k,
        unsafe_components: part.unsafe_components(),
        z_safe: part.z_safe(),
        residuals: identity_residuals(&gm, &part, s, &grid)?,
    })
}
