//! Discrete variance-preserving noise schedules and the Gaussian
//! perturbation kernel `q_t(x_t | x) = N(x_t; α_t x, σ_t² I)`.
//!
//! Steps are indexed `0..=T`; step 0 is the clean-data endpoint with
//! `α_0 = 1`, `σ_0 = 0`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Which family of coefficients a schedule was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    VpLinear,
    Cosine,
    /// Coefficients supplied directly by the caller.
    Custom,
}

/// Construction parameters for [`make_schedule`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleParams {
    /// Per-step variances `b_i` linearly spaced in `[beta_min, beta_max]`.
    VpLinear { beta_min: f64, beta_max: f64 },
    /// Cosine schedule with offset `s`.
    Cosine { offset: f64 },
}

impl ScheduleParams {
    pub fn kind(&self) -> ScheduleKind {
        match self {
            ScheduleParams::VpLinear { .. } => ScheduleKind::VpLinear,
            ScheduleParams::Cosine { .. } => ScheduleKind::Cosine,
        }
    }
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams::VpLinear {
            beta_min: 1e-4,
            beta_max: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    alpha: Vec<f64>,
    sigma: Vec<f64>,
}

/// Build a schedule with `steps` discrete steps (T).
pub fn make_schedule(steps: usize, params: ScheduleParams) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::InvalidParameter(format!(
            "schedule needs at least 2 steps, got {steps}"
        )));
    }
    let mut alpha = Vec::with_capacity(steps + 1);
    let mut sigma = Vec::with_capacity(steps + 1);
    alpha.push(1.0);
    sigma.push(0.0);

    match params {
        ScheduleParams::VpLinear { beta_min, beta_max } => {
            if !(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "vp_linear bounds must satisfy 0 < beta_min < beta_max < 1, got [{beta_min}, {beta_max}]"
                )));
            }
            let mut log_abar = 0.0;
            for i in 0..steps {
                let b = beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64;
                log_abar += (-b).ln_1p();
                alpha.push((0.5 * log_abar).exp());
                sigma.push((-log_abar.exp_m1()).sqrt());
            }
        }
        ScheduleParams::Cosine { offset } => {
            if !(offset > 0.0 && offset.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "cosine offset must be positive, got {offset}"
                )));
            }
            let f = |t: f64| ((t + offset) / (1.0 + offset) * FRAC_PI_2).cos();
            let f0 = f(0.0);
            for i in 1..=steps {
                // α_t = sqrt(ᾱ(t)) with ᾱ(t) = cos²(..)/cos²(..)
                let a = (f(i as f64 / steps as f64) / f0).clamp(0.0, 1.0);
                alpha.push(a);
                sigma.push((1.0 - a * a).max(0.0).sqrt());
            }
        }
    }

    let schedule = NoiseSchedule {
        kind: params.kind(),
        alpha,
        sigma,
    };
    schedule.check_monotone()?;
    Ok(schedule)
}

impl NoiseSchedule {
    /// Schedule from explicit coefficient sequences (index 0 = data end).
    /// Not required to be variance preserving.
    pub fn from_coefficients(alpha: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if alpha.len() != sigma.len() {
            return Err(Error::DimensionMismatch {
                expected: alpha.len(),
                got: sigma.len(),
            });
        }
        if alpha.len() < 3 {
            return Err(Error::InvalidParameter(
                "schedule needs at least 2 steps".into(),
            ));
        }
        if alpha[0] != 1.0 || sigma[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "step 0 must have alpha = 1 and sigma = 0".into(),
            ));
        }
        let schedule = NoiseSchedule {
            kind: ScheduleKind::Custom,
            alpha,
            sigma,
        };
        schedule.check_monotone()?;
        Ok(schedule)
    }

    fn check_monotone(&self) -> Result<()> {
        for t in 1..self.alpha.len() {
            let (a, s) = (self.alpha[t], self.sigma[t]);
            if !(a.is_finite() && s.is_finite() && a >= 0.0 && s > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "non-finite or degenerate coefficients at step {t}"
                )));
            }
            if !(a < self.alpha[t - 1] && s > self.sigma[t - 1]) {
                return Err(Error::InvalidParameter(format!(
                    "coefficients not strictly monotone at step {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of steps T.
    pub fn steps(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub fn snr(&self, t: usize) -> f64 {
        let (a, s) = (self.alpha[t], self.sigma[t]);
        a * a / (s * s)
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            Err(Error::StepOutOfRange {
                step: t,
                max: self.steps(),
            })
        } else {
            Ok(())
        }
    }

    /// Returns an error unless `α_t² + σ_t² = 1` at every step.
    pub fn ensure_variance_preserving(&self) -> Result<()> {
        for (t, (a, s)) in self.alpha.iter().zip(&self.sigma).enumerate() {
            let v = a * a + s * s;
            if (v - 1.0).abs() > 1e-12 {
                return Err(Error::NonVpSchedule { step: t, value: v });
            }
        }
        Ok(())
    }

    /// `log N(x_t; α_t x, σ_t² I)`.
    pub fn log_kernel(&self, t: usize, x_t: &[f64], x: &[f64]) -> Result<f64> {
        self.check_step(t)?;
        if x_t.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x_t.len(),
                got: x.len(),
            });
        }
        let s = self.sigma[t];
        if s == 0.0 {
            return Err(Error::DegenerateKernel { step: t });
        }
        let a = self.alpha[t];
        let sq: f64 = x_t
            .iter()
            .zip(x)
            .map(|(xt, x0)| {
                let r = xt - a * x0;
                r * r
            })
            .sum();
        let var = s * s;
        Ok(-0.5 * x.len() as f64 * (2.0 * PI * var).ln() - 0.5 * sq / var)
    }
}
