//! Denoiser compositions: classifier-free guidance, negative guidance,
//! SLD, SAFREE-style filtered guidance, the gated safe denoiser and its
//! combinations, and the sparse-repellency baseline.
//!
//! Every composition evaluates its input fields at the same `(x_t, t)`
//! and combines the outputs pointwise.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::empirical::UnsafeDataset;
use crate::error::{Error, Result};
use crate::field::{check_same_dim, Denoiser, DenoiserField, GateRecord, Point, Trace, WeightEvaluator};
use crate::mixture::{exact_denoiser, GaussianMixture, SafetyPartition};
use crate::numeric::apply_safe_term;
use crate::schedule::NoiseSchedule;

/// η paired with SAFREE-style guidance.
pub const ETA_SAFREE: f64 = 0.33;
/// η paired with SLD-style guidance.
pub const ETA_SLD: f64 = 0.03;
/// Fraction of steps (nearest t = T) in the default critical set.
pub const CRITICAL_FRACTION: f64 = 0.22;

/// A toy-scale condition: a nonempty subset of mixture components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionSpec {
    components: Vec<usize>,
    label: String,
}

impl ConditionSpec {
    pub fn new(components: Vec<usize>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if components.is_empty() {
            return Err(Error::InvalidParameter(format!("condition '{label}' has no components")));
        }
        Ok(Self { components, label })
    }

    pub fn components(&self) -> &[usize] {
        &self.components
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The condition with every unsafe component removed.
    pub fn filtered(&self, part: &SafetyPartition) -> Result<Self> {
        let kept: Vec<usize> = self.components.iter().copied().filter(|&k| !part.is_unsafe(k)).collect();
        if kept.is_empty() {
            return Err(Error::EmptyFilteredCondition(self.label.clone()));
        }
        Ok(Self {
            components: kept,
            label: format!("{}~filtered", self.label),
        })
    }

    /// Exact conditional denoiser `E[x | x_t, c]` over the component subset.
    pub fn denoiser(&self, gm: &GaussianMixture, s: &NoiseSchedule) -> Result<DenoiserField> {
        exact_denoiser(&gm.sub_mixture(&self.components)?, s)
    }
}

/// Steps at which the safe term may be applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CriticalSteps {
    All,
    Empty,
    Set(BTreeSet<usize>),
}

impl CriticalSteps {
    /// The 22% of steps nearest `t = T` (780..=1000 for T = 1000).
    pub fn default_for(steps: usize) -> Self {
        Self::range(default_critical_start(steps), steps)
    }

    pub fn range(from: usize, to: usize) -> Self {
        CriticalSteps::Set((from.max(1)..=to).collect())
    }

    pub fn contains(&self, t: usize) -> bool {
        match self {
            CriticalSteps::All => t >= 1,
            CriticalSteps::Empty => false,
            CriticalSteps::Set(s) => s.contains(&t),
        }
    }
}

pub fn default_critical_start(steps: usize) -> usize {
    steps - (CRITICAL_FRACTION * steps as f64).round() as usize
}

/// Gate threshold β_t; β is zeroed unless it strictly exceeds it.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaThreshold {
    Constant(f64),
    /// Entry `i` holds the threshold of step `i + 1`.
    PerStep(Vec<f64>),
}

impl BetaThreshold {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            BetaThreshold::Constant(v) => *v,
            BetaThreshold::PerStep(v) => t.checked_sub(1).and_then(|i| v.get(i)).copied().unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    pub lambda: f64,
    pub mu_gamma: f64,
    pub mu_max: f64,
    pub eta: f64,
    pub beta_threshold: BetaThreshold,
    pub critical_steps: CriticalSteps,
    pub sr_radius: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mu_gamma: 0.0,
            mu_max: 0.0,
            eta: 1.0,
            beta_threshold: BetaThreshold::Constant(0.0),
            critical_steps: CriticalSteps::All,
            sr_radius: 1.0,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self, steps: usize) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be nonnegative, got {v}")))
            }
        };
        nonneg("eta", self.eta)?;
        nonneg("mu_gamma", self.mu_gamma)?;
        nonneg("mu_max", self.mu_max)?;
        match &self.beta_threshold {
            BetaThreshold::Constant(v) => nonneg("beta_threshold", *v)?,
            BetaThreshold::PerStep(v) => {
                if v.len() != steps {
                    return Err(Error::InvalidParameter(format!(
                        "per-step beta_threshold needs {steps} entries, got {}",
                        v.len()
                    )));
                }
                for x in v {
                    nonneg("beta_threshold", *x)?;
                }
            }
        }
        if let CriticalSteps::Set(set) = &self.critical_steps {
            if let Some(bad) = set.iter().find(|&&t| t == 0 || t > steps) {
                return Err(Error::InvalidParameter(format!(
                    "critical step {bad} outside 1..={steps}"
                )));
            }
        }
        if !(self.sr_radius > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sr_radius must be positive, got {}",
                self.sr_radius
            )));
        }
        Ok(())
    }

    /// SLD's adaptive negative weight `min(mu_max, γ‖pos − neg‖)`.
    pub fn sld_mu(&self, pos: &Point, neg: &Point) -> f64 {
        (self.mu_gamma * (pos - neg).norm()).min(self.mu_max)
    }
}

/// `base + Σ c_i (a_i − b_i)`, elementwise.
fn affine(base: &Point, terms: &[(f64, &Point, &Point)]) -> Point {
    let mut out = base.clone();
    for (c, a, b) in terms {
        for i in 0..out.len() {
            out[i] += c * (a[i] - b[i]);
        }
    }
    out
}

struct Cfg {
    label: String,
    uncond: DenoiserField,
    cond: DenoiserField,
    lambda: f64,
}

impl Denoiser for Cfg {
    fn dim(&self) -> usize {
        self.uncond.dim()
    }

    fn label(&self) -> &str {
        &self.label
    }

    fn denoise_traced(&self, x: &Point, t: usize, trace: &mut Trace) -> Result<Point> {
        let u = self.uncond.denoise_traced(x, t, trace)?;
        let c = self.cond.denoise_traced(x, t, trace)?;
        Ok(affine(&u, &[(self.lambda, &c, &u)]))
    }
}

/// `uncond + λ(cond − uncond)`.
pub fn cfg(uncond: DenoiserField, cond: DenoiserField, lambda: f64) -> Result<DenoiserField> {
    check_same_dim(&[&uncond, &cond])?;
    Ok(Arc::new(Cfg {
        label: "cfg".into(),
        uncond,
        cond,
        lambda,
    }))
}

/// `uncond + λ(cond_modified − uncond)`, where `cond_modified` is the
/// denoiser under the filtered condition.
pub fn safree_term(uncond: DenoiserField, cond_modified: DenoiserField, lambda: f64) -> Result<DenoiserField> {
    check_same_dim(&[&uncond, &cond_modified])?;
    Ok(Arc::new(Cfg {
        label: "safree".into(),
        uncond,
        cond: cond_modified,
        lambda,
    }))
}

struct Negative {
    uncond: DenoiserField,
    pos: DenoiserField,
    neg: DenoiserField,
    lambda: f64,
}

impl Denoiser for Negative {
    fn dim(&self) -> usize {
        self.uncond.dim()
    }

    fn label(&self) -> &str {
        "negative-guidance"
    }

    fn denoise_traced(&self, x: &Point, t: usize, trace: &mut Trace) -> Result<Point> {
        let u = self.uncond.denoise_traced(x, t, trace)?;
        let p = self.pos.denoise_traced(x, t, trace)?;
        let n = self.neg.denoise_traced(x, t, trace)?;
        Ok(affine(&u, &[(self.lambda, &p, &n)]))
    }
}

/// `uncond + λ(pos − neg)`.
pub fn negative_guidance(
    uncond: DenoiserField,
    pos: DenoiserField,
    neg: DenoiserField,
    lambda: f64,
) -> Result<DenoiserField> {
    check_same_dim(&[&uncond, &pos, &neg])?;
    Ok(Arc::new(Negative {
        uncond,
        pos,
        neg,
        lambda,
    }))
}

/// Shared shape of SLD and its safe-denoiser variant:
/// `base + λ(pos − uncond) − μ(neg − uncond)`.
struct Sld {
    label: &'static str,
    // the safe denoiser in the combined form, otherwise the uncond field
    base: Option<DenoiserField>,
    uncond: DenoiserField,
    pos: DenoiserField,
    neg: DenoiserField,
    lambda: f64,
    gc: GuidanceConfig,
}

impl Denoiser for Sld {
    fn dim(&self) -> usize {
        self.uncond.dim()
    }

    fn label(&self) -> &str {
        self.label
    }

    fn denoise_traced(&self, x: &Point, t: usize, trace: &mut Trace) -> Result<Point> {
        let base = match &self.base {
            Some(b) => Some(b.denoise_traced(x, t, trace)?),
            None => None,
        };
        let u = self.uncond.denoise_traced(x, t, trace)?;
        let p = self.pos.denoise_traced(x, t, trace)?;
        let n = self.neg.denoise_traced(x, t, trace)?;
        let mu = self.gc.sld_mu(&p, &n);
        Ok(affine(base.as_ref().unwrap_or(&u), &[(self.lambda, &p, &u), (-mu, &n, &u)]))
    }
}

/// `uncond + λ(pos − uncond) − μ(neg_safe − uncond)` with the adaptive μ of
/// [`GuidanceConfig::sld_mu`].
pub fn sld(
    uncond: DenoiserField,
    pos: DenoiserField,
    neg_safe: DenoiserField,
    lambda: f64,
    gc: &GuidanceConfig,
) -> Result<DenoiserField> {
    check_same_dim(&[&uncond, &pos, &neg_safe])?;
    Ok(Arc::new(Sld {
        label: "sld",
        base: None,
        uncond,
        pos,
        neg: neg_safe,
        lambda,
        gc: gc.clone(),
    }))
}

struct SafeCompose {
    data: DenoiserField,
    unsafe_hat: DenoiserField,
    beta: WeightEvaluator,
    gc: GuidanceConfig,
}

impl SafeCompose {
    fn gate(&self, x: &Point, t: usize) -> Result<GateRecord> {
        let beta = if self.gc.critical_steps.contains(t) {
            self.beta.weight(x, t)?
        } else {
            0.0
        };
        let gate_open = beta > self.gc.beta_threshold.at(t);
        let applied_weight = if gate_open { self.gc.eta * beta } else { 0.0 };
        Ok(GateRecord {
            beta,
            gate_open,
            applied_weight,
        })
    }
}

impl Denoiser for SafeCompose {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn label(&self) -> &str {
        "safe"
    }

    fn denoise_traced(&self, x: &Point, t: usize, trace: &mut Trace) -> Result<Point> {
        let e = self.data.denoise_traced(x, t, trace)?;
        let gate = self.gate(x, t)?;
        trace.gate = Some(gate);
        if gate.applied_weight == 0.0 {
            return Ok(e);
        }
        let u = self.unsafe_hat.denoise_traced(x, t, trace)?;
        Ok(apply_safe_term(e, &u, gate.applied_weight))
    }
}

/// Gated safe denoiser `E_data + η·b·(E_data − Ê_unsafe)`, where `b` is the
/// weight when `t` is critical and it exceeds the step threshold, else 0.
pub fn safe_compose(
    data: DenoiserField,
    unsafe_hat: DenoiserField,
    beta: WeightEvaluator,
    gc: &GuidanceConfig,
) -> Result<DenoiserField> {
    check_same_dim(&[&data, &unsafe_hat])?;
    if !(gc.eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be nonnegative, got {}", gc.eta)));
    }
    Ok(Arc::new(SafeCompose {
        data,
        unsafe_hat,
        beta,
        gc: gc.clone(),
    }))
}

struct SafreeOurs {
    safe: DenoiserField,
    uncond: DenoiserField,
    cond_modified: DenoiserField,
    lambda: f64,
}

impl Denoiser for SafreeOurs {
    fn dim(&self) -> usize {
        self.safe.dim()
    }

    fn label(&self) -> &str {
        "safree+safe"
    }

    fn denoise_traced(&self, x: &Point, t: usize, trace: &mut Trace) -> Result<Point> {
        let s = self.safe.denoise_traced(x, t, trace)?;
        let u = self.uncond.denoise_traced(x, t, trace)?;
        let c = self.cond_modified.denoise_traced(x, t, trace)?;
        Ok(affine(&s, &[(self.lambda, &c, &u)]))
    }
}

/// `E_safe + λ(cond_modified − uncond)`.
pub fn combine_safree_ours(
    safe: DenoiserField,
    uncond: DenoiserField,
    cond_modified: DenoiserField,
    lambda: f64,
) -> Result<DenoiserField> {
    check_same_dim(&[&safe, &uncond, &cond_modified])?;
    Ok(Arc::new(SafreeOurs {
        safe,
        uncond,
        cond_modified,
        lambda,
    }))
}

/// `E_safe + λ(pos − uncond) − μ(neg_safe − uncond)`.
pub fn combine_sld_ours(
    safe: DenoiserField,
    uncond: DenoiserField,
    pos: DenoiserField,
    neg_safe: DenoiserField,
    lambda: f64,
    gc: &GuidanceConfig,
) -> Result<DenoiserField> {
    check_same_dim(&[&safe, &uncond, &pos, &neg_safe])?;
    Ok(Arc::new(Sld {
        label: "sld+safe",
        base: Some(safe),
        uncond,
        pos,
        neg: neg_safe,
        lambda,
        gc: gc.clone(),
    }))
}

struct SparseRepellency {
    data: DenoiserField,
    ds: Arc<UnsafeDataset>,
    radius: f64,
}

impl Denoiser for SparseRepellency {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn label(&self) -> &str {
        "sparse-repellency"
    }

    fn denoise_traced(&self, x: &Point, t: usize, trace: &mut Trace) -> Result<Point> {
        let e = self.data.denoise_traced(x, t, trace)?;
        Ok(repel(&e, self.ds.points(), self.radius))
    }
}

/// `e + Σ_n ReLU(r/‖e − x_n‖ − 1)(e − x_n)`. A point coinciding with `e`
/// pushes by `r` along the first coordinate axis.
pub fn repel(e: &Point, points: &[Point], radius: f64) -> Point {
    let mut out = e.clone();
    for p in points {
        let diff = e - p;
        let dist = diff.norm();
        if dist == 0.0 {
            out[0] += radius;
        } else if dist < radius {
            out.axpy(radius / dist - 1.0, &diff, 1.0);
        }
    }
    out
}

pub fn sparse_repellency(data: DenoiserField, ds: Arc<UnsafeDataset>, radius: f64) -> Result<DenoiserField> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("repellency radius must be positive, got {radius}")));
    }
    if ds.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            got: ds.dim(),
        });
    }
    Ok(Arc::new(SparseRepellency { data, ds, radius }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::constant_field;
    use nalgebra::{dvector, DVector};

    fn c(v: Point) -> DenoiserField {
        constant_field(v, "const")
    }

    fn at(f: &DenoiserField) -> Point {
        f.denoise(&DVector::zeros(f.dim()), 3).unwrap()
    }

    #[test]
    fn cfg_cases() {
        let u = c(dvector![0.0, 0.0]);
        let k = c(dvector![1.0, 0.0]);
        assert_eq!(at(&cfg(u.clone(), k.clone(), 0.0).unwrap()), dvector![0.0, 0.0]);
        assert_eq!(at(&cfg(u.clone(), k.clone(), 1.0).unwrap()), dvector![1.0, 0.0]);
        assert_eq!(at(&cfg(u, k, 2.0).unwrap()), dvector![2.0, 0.0]);
        let err = cfg(c(dvector![0.0]), c(dvector![0.0, 1.0]), 1.0).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn negative_guidance_cases() {
        let u = c(dvector![0.3, -0.2]);
        let p = c(dvector![1.5, 2.0]);
        let n = c(dvector![-0.5, 0.25]);
        for lam in [0.0, 1.0, 7.5] {
            assert_eq!(at(&negative_guidance(u.clone(), p.clone(), p.clone(), lam).unwrap()), dvector![0.3, -0.2]);
        }
        let out = at(&negative_guidance(u, p, n, 1.5).unwrap());
        let expected = [0.3 + 1.5 * (1.5 - -0.5), -0.2 + 1.5 * (2.0 - 0.25)];
        assert!((out[0] - expected[0]).abs() < 1e-15 && (out[1] - expected[1]).abs() < 1e-15);
    }

    #[test]
    fn sld_gamma_zero_is_cfg() {
        let u = c(dvector![0.1, 0.2]);
        let p = c(dvector![1.0, -1.0]);
        let n = c(dvector![4.0, 4.0]);
        let gc = GuidanceConfig {
            mu_gamma: 0.0,
            mu_max: 100.0,
            ..Default::default()
        };
        let a = at(&sld(u.clone(), p.clone(), n, 3.0, &gc).unwrap());
        let b = at(&cfg(u, p, 3.0).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn sld_with_mu_equal_lambda_is_negative_guidance() {
        let u = c(dvector![0.1, 0.2]);
        let p = c(dvector![1.0, -1.0]);
        let n = c(dvector![4.0, 4.0]);
        let lam = 2.5;
        let gc = GuidanceConfig {
            mu_gamma: 1e12,
            mu_max: lam,
            ..Default::default()
        };
        let a = at(&sld(u.clone(), p.clone(), n.clone(), lam, &gc).unwrap());
        let b = at(&negative_guidance(u, p, n, lam).unwrap());
        assert!((a - b).amax() < 1e-12);
    }

    #[test]
    fn sld_adaptive_weight_hand_value() {
        // ‖pos − neg‖ = 1, γ = 0.5 → μ = 0.5
        let (u, p, n) = (0.25, 1.0, 0.0);
        let gc = GuidanceConfig {
            mu_gamma: 0.5,
            mu_max: 10.0,
            ..Default::default()
        };
        let out = at(&sld(c(dvector![u]), c(dvector![p]), c(dvector![n]), 2.0, &gc).unwrap());
        let expected = u + 2.0 * (p - u) - 0.5 * (n - u);
        assert!((out[0] - expected).abs() < 1e-15);
        assert!((expected - 1.875).abs() < 1e-15);
    }

    #[test]
    fn safree_filtering() {
        let gm = GaussianMixture::isotropic(
            vec![0.5, 0.5],
            vec![dvector![1.0, 0.0], dvector![-1.0, 0.0]],
            &[0.2, 0.2],
        )
        .unwrap();
        let part = SafetyPartition::new(&gm, &[1]).unwrap();
        let cond = ConditionSpec::new(vec![0, 1], "both").unwrap();
        let f = cond.filtered(&part).unwrap();
        assert_eq!(f.components(), &[0]);
        let only_unsafe = ConditionSpec::new(vec![1], "bad").unwrap();
        assert!(matches!(only_unsafe.filtered(&part), Err(Error::EmptyFilteredCondition(_))));
        assert!(ConditionSpec::new(vec![], "empty").is_err());
        let safe_only = ConditionSpec::new(vec![0], "a").unwrap();
        assert_eq!(safe_only.filtered(&part).unwrap().components(), safe_only.components());
    }

    #[test]
    fn safe_compose_gates() {
        let e = c(dvector![1.0, 1.0]);
        let u = c(dvector![3.0, -1.0]);
        let beta: WeightEvaluator = Arc::new(|_: &Point, _: usize| Ok(0.5));
        let closed = GuidanceConfig {
            critical_steps: CriticalSteps::range(5, 10),
            ..Default::default()
        };
        let f = safe_compose(e.clone(), u.clone(), beta.clone(), &closed).unwrap();
        let x = dvector![0.0, 0.0];
        assert_eq!(f.denoise(&x, 3).unwrap(), dvector![1.0, 1.0]);
        let open = f.denoise(&x, 7).unwrap();
        assert_eq!(open, dvector![1.0 + 0.5 * (1.0 - 3.0), 1.0 + 0.5 * 2.0]);

        let inf = GuidanceConfig {
            beta_threshold: BetaThreshold::Constant(f64::INFINITY),
            ..Default::default()
        };
        let f = safe_compose(e, u, beta, &inf).unwrap();
        let mut tr = Trace::default();
        assert_eq!(f.denoise_traced(&x, 7, &mut tr).unwrap(), dvector![1.0, 1.0]);
        assert_eq!(
            tr.gate,
            Some(GateRecord {
                beta: 0.5,
                gate_open: false,
                applied_weight: 0.0
            })
        );
    }

    #[test]
    fn critical_default_matches_thousand_step_range() {
        let c = CriticalSteps::default_for(1000);
        let CriticalSteps::Set(s) = &c else { panic!() };
        assert_eq!(s.first(), Some(&780));
        assert_eq!(s.last(), Some(&1000));
        assert_eq!(s.len(), 221);
        assert!(!CriticalSteps::All.contains(0));
    }

    #[test]
    fn combine_forms() {
        let safe = c(dvector![0.5]);
        let u = c(dvector![0.0]);
        let m = c(dvector![2.0]);
        let out = at(&combine_safree_ours(safe.clone(), u.clone(), m.clone(), 0.0).unwrap());
        assert_eq!(out, dvector![0.5]);
        let out = at(&combine_safree_ours(safe.clone(), u.clone(), m.clone(), 1.5).unwrap());
        assert_eq!(out, dvector![0.5 + 1.5 * 2.0]);

        let gc = GuidanceConfig {
            mu_gamma: 0.25,
            mu_max: 1.0,
            ..Default::default()
        };
        let n = c(dvector![-2.0]);
        let out = at(&combine_sld_ours(safe.clone(), u.clone(), m.clone(), n.clone(), 0.0, &GuidanceConfig::default()).unwrap());
        assert_eq!(out, dvector![0.5]);
        // μ = min(1, 0.25 · 4) = 1
        let out = at(&combine_sld_ours(safe, u, m, n, 2.0, &gc).unwrap());
        assert!((out[0] - (0.5 + 2.0 * 2.0 - 1.0 * -2.0)).abs() < 1e-15);
    }

    #[test]
    fn repellency_cases() {
        let x1 = dvector![1.0, -1.0];
        let r = 0.8;
        // outside and on the boundary: unchanged
        for d in [0.8, 1.5] {
            let e = &x1 + dvector![d, 0.0];
            assert_eq!(repel(&e, std::slice::from_ref(&x1), r), e);
        }
        // half radius along +e1 moves to distance r
        let e = &x1 + dvector![r / 2.0, 0.0];
        let out = repel(&e, std::slice::from_ref(&x1), r);
        let expected = [x1[0] + r, x1[1]];
        assert!((out[0] - expected[0]).abs() < 1e-12 && (out[1] - expected[1]).abs() < 1e-12);
        // coincident point
        let out = repel(&x1, std::slice::from_ref(&x1), r);
        assert_eq!(out, dvector![1.0 + r, -1.0]);
        assert!(sparse_repellency(c(dvector![0.0, 0.0]), Arc::new(UnsafeDataset::new(vec![x1]).unwrap()), 0.0).is_err());
    }

    #[test]
    fn per_step_threshold_indexing() {
        let th = BetaThreshold::PerStep(vec![0.1, 0.2, 0.3]);
        assert_eq!(th.at(1), 0.1);
        assert_eq!(th.at(3), 0.3);
        assert_eq!(th.at(0), f64::INFINITY);
        let gc = GuidanceConfig {
            beta_threshold: th,
            ..Default::default()
        };
        assert!(gc.validate(3).is_ok());
        assert!(gc.validate(4).is_err());
    }
}
