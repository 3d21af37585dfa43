//! Wires a resolved config into mixtures, fields and runs, executes the
//! named experiment and writes its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use sdlab_core::empirical::{
    empirical_beta_evaluator, empirical_unsafe_denoiser, KernelConfig, UnsafeDataset,
};
use sdlab_core::guidance::{BetaThreshold, ConditionSpec, CriticalSteps, GuidanceConfig};
use sdlab_core::metrics::{evaluate_with_floor, EvalReport};
use sdlab_core::mixture::{exact_beta_evaluator, exact_denoiser, GaussianMixture, SafetyPartition};
use sdlab_core::sampler::{
    run_algorithm1, stream_rng, FieldSet, GuidanceMode, Init, RunConfig, RunResult, Solver, DATASET_STREAM,
};
use sdlab_core::schedule::{make_schedule, NoiseSchedule, ScheduleParams};
use sdlab_core::verify::{check_random_instance, empirical_beta_check, empirical_denoiser_rms, forward_grid_at};
use sdlab_core::Point;

use crate::config::*;
use crate::output::{self, num, EvalJson, Panel};

/// RNG stream of the energy-distance reference draws.
pub const REFERENCE_STREAM: u64 = u64::MAX - 1;
/// RNG stream of the estimator evaluation grid.
pub const GRID_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub assertions: Vec<Assertion>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured output directory.
    pub out: Option<PathBuf>,
    /// Size of the worker pool; `None` uses the global pool.
    pub threads: Option<usize>,
}

// ---------------------------------------------------------------- wiring

pub fn build_schedule(spec: &ScheduleSpec) -> Result<NoiseSchedule> {
    let params = match spec.kind {
        ScheduleKindSpec::VpLinear => ScheduleParams::VpLinear {
            beta_min: spec.beta_min.unwrap_or(1e-4),
            beta_max: spec.beta_max.unwrap_or(0.02),
        },
        ScheduleKindSpec::Cosine => ScheduleParams::Cosine {
            offset: spec.offset.unwrap_or(0.008),
        },
    };
    make_schedule(spec.steps, params).context("schedule")
}

pub fn build_mixture(spec: &MixtureSpec) -> Result<GaussianMixture> {
    let means: Vec<Point> = spec.means.iter().map(|m| DVector::from_vec(m.clone())).collect();
    let gm = match (&spec.covariances, &spec.variances) {
        (Some(covs), _) => {
            let covs = covs
                .iter()
                .map(|c| {
                    let d = c.len();
                    DMatrix::from_fn(d, d, |i, j| c[i][j])
                })
                .collect();
            GaussianMixture::new(spec.weights.0.clone(), means, covs)
        }
        (None, Some(v)) => GaussianMixture::isotropic(spec.weights.0.clone(), means, v),
        (None, None) => bail!("mixture: covariances or variances are required"),
    };
    gm.context("mixture")
}

/// Everything a run needs besides the guidance wiring.
pub struct World {
    pub schedule: Arc<NoiseSchedule>,
    pub gm: GaussianMixture,
    pub part: SafetyPartition,
    pub dataset: Option<Arc<UnsafeDataset>>,
}

fn read_csv_points(path: &Path, dim: usize) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open dataset {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 1))?;
        let values: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: row {} is not numeric", path.display(), i + 1))?;
        if values.len() != dim {
            bail!("{}: row {} has {} columns, expected {dim}", path.display(), i + 1, values.len());
        }
        out.push(DVector::from_vec(values));
    }
    Ok(out)
}

impl World {
    pub fn new(cfg: &Config) -> Result<Self> {
        let schedule = Arc::new(build_schedule(&cfg.schedule)?);
        let spec = cfg.mixture.as_ref().context("mixture: a mixture is required")?;
        let gm = build_mixture(spec)?;
        let part = SafetyPartition::new(&gm, &cfg.unsafe_components).context("unsafe_components")?;
        let dataset = match &cfg.dataset {
            None => None,
            Some(DatasetSource::Sample(m)) => {
                let uns = part.unsafe_mixture(&gm).context("dataset")?;
                let mut rng = stream_rng(cfg.seed, DATASET_STREAM);
                let pts = (0..*m).map(|_| uns.sample(&mut rng)).collect();
                Some(Arc::new(UnsafeDataset::new(pts)?))
            }
            Some(DatasetSource::Csv(p)) => {
                let pts = read_csv_points(Path::new(p), gm.dim())?;
                Some(Arc::new(UnsafeDataset::new(pts).with_context(|| format!("dataset {p}"))?))
            }
        };
        Ok(Self {
            schedule,
            gm,
            part,
            dataset,
        })
    }

    fn condition(&self, comps: &[usize], label: &str) -> Result<ConditionSpec> {
        Ok(ConditionSpec::new(comps.to_vec(), label)?)
    }

    /// Fields required by the configured guidance mode.
    pub fn fields(&self, g: &GuidanceSpec) -> Result<FieldSet> {
        let s = &self.schedule;
        let mut f = FieldSet::new(exact_denoiser(&self.gm, s)?);
        let kernel = kernel_config(g.kernel)?;
        let mode = guidance_mode(g.mode);
        if mode.uses_safe_term() {
            let ds = || self.dataset.clone().context("dataset: required for empirical estimates");
            f.unsafe_hat = Some(match g.unsafe_denoiser {
                SourceSpec::Exact => exact_denoiser(&self.part.unsafe_mixture(&self.gm)?, s)?,
                SourceSpec::Empirical => empirical_unsafe_denoiser(ds()?, s.clone(), kernel)?,
            });
            f.beta = Some(match g.weight {
                SourceSpec::Exact => exact_beta_evaluator(&self.gm, &self.part, s)?,
                SourceSpec::Empirical => empirical_beta_evaluator(ds()?, s.clone(), kernel),
            });
        }
        let needs_condition = !matches!(
            mode,
            GuidanceMode::Baseline | GuidanceMode::Safe | GuidanceMode::SparseRepellency
        );
        if needs_condition {
            let comps = g.condition.as_ref().context("guidance.condition: required by this mode")?;
            let pos = self.condition(comps, "positive")?;
            f.positive = Some(pos.denoiser(&self.gm, s)?);
            f.modified = Some(pos.filtered(&self.part).context("guidance.condition")?.denoiser(&self.gm, s)?);
            let neg = match &g.negative_condition {
                Some(c) => c.clone(),
                None => self.part.unsafe_components(),
            };
            if !neg.is_empty() {
                f.negative = Some(self.condition(&neg, "negative")?.denoiser(&self.gm, s)?);
            }
        }
        Ok(f)
    }

    /// Draws from the safe sub-mixture used as the energy-distance reference.
    pub fn reference(&self, cfg: &Config) -> Result<Vec<Point>> {
        if cfg.evaluation.reference_size == 0 {
            return Ok(Vec::new());
        }
        let safe = self.part.safe_mixture(&self.gm)?;
        let mut rng = stream_rng(cfg.seed, REFERENCE_STREAM);
        Ok((0..cfg.evaluation.reference_size).map(|_| safe.sample(&mut rng)).collect())
    }
}

pub fn kernel_config(k: KernelSpec) -> Result<KernelConfig> {
    Ok(match k {
        KernelSpec::Diffusion => KernelConfig::Diffusion,
        KernelSpec::RbfSld => KernelConfig::rbf_sld(),
        KernelSpec::RbfSafree => KernelConfig::rbf_safree(),
        KernelSpec::Rbf(h) => KernelConfig::rbf(h)?,
    })
}

pub fn guidance_mode(m: ModeSpec) -> GuidanceMode {
    match m {
        ModeSpec::Baseline => GuidanceMode::Baseline,
        ModeSpec::Cfg => GuidanceMode::Cfg,
        ModeSpec::NegativeGuidance => GuidanceMode::NegativeGuidance,
        ModeSpec::Sld => GuidanceMode::Sld,
        ModeSpec::Safree => GuidanceMode::Safree,
        ModeSpec::Safe => GuidanceMode::Safe,
        ModeSpec::SafreeSafe => GuidanceMode::SafreeSafe,
        ModeSpec::SldSafe => GuidanceMode::SldSafe,
        ModeSpec::SparseRepellency => GuidanceMode::SparseRepellency,
    }
}

pub fn threshold(t: &ThresholdSpec) -> BetaThreshold {
    match t {
        ThresholdSpec::Value(v) => BetaThreshold::Constant(*v),
        ThresholdSpec::Infinite => BetaThreshold::Constant(f64::INFINITY),
        ThresholdSpec::PerStep(v) => BetaThreshold::PerStep(v.clone()),
    }
}

fn critical(c: &CriticalSpec, steps: usize) -> CriticalSteps {
    match c {
        CriticalSpec::Default => CriticalSteps::default_for(steps),
        CriticalSpec::All => CriticalSteps::All,
        CriticalSpec::None => CriticalSteps::Empty,
        CriticalSpec::Steps(v) => CriticalSteps::Set(v.iter().copied().collect()),
        CriticalSpec::Range { from, to } => CriticalSteps::range(*from, *to),
    }
}

fn init_points(init: &InitSpec, dim: usize) -> Init {
    match init {
        InitSpec::StandardNormal => Init::StandardNormal,
        InitSpec::FixedPoints(p) => Init::FixedPoints(p.iter().map(|x| DVector::from_vec(x.clone())).collect()),
        InitSpec::Ring { count, radius } => Init::FixedPoints(
            (0..*count)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / *count as f64;
                    let mut x = DVector::zeros(dim);
                    x[0] = radius * a.cos();
                    x[1] = radius * a.sin();
                    x
                })
                .collect(),
        ),
    }
}

/// The sampler configuration described by `cfg`.
pub fn run_config(cfg: &Config, dim: usize) -> RunConfig {
    let g = &cfg.guidance;
    let steps = cfg.schedule.steps;
    let solver = match cfg.sampler.solver {
        SolverSpec::Ddpm => Solver::Ddpm,
        SolverSpec::Ddim => Solver::Ddim,
    };
    let mut rc = RunConfig::new(solver, guidance_mode(g.mode), cfg.sampler.n_samples, cfg.seed);
    rc.gc = GuidanceConfig {
        lambda: g.lambda,
        mu_gamma: g.mu_gamma,
        mu_max: g.mu_max,
        eta: g.eta.unwrap_or(1.0),
        beta_threshold: threshold(&g.beta_threshold),
        critical_steps: critical(&g.critical_steps, steps),
        sr_radius: g.sr_radius,
    };
    rc.weight_scale = g.weight_scale;
    rc.init = init_points(&cfg.sampler.init, dim);
    rc.record_trajectories = cfg.sampler.trajectories;
    rc.record_diagnostics = cfg.sampler.diagnostics;
    rc
}

// ---------------------------------------------------------------- reports

#[derive(Debug, Clone, Serialize)]
struct RunReport {
    config_hash: String,
    seed: u64,
    experiment: Experiment,
    label: String,
    #[serde(flatten)]
    eval: EvalJson,
    gate_open_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
struct SummaryReport<T: Serialize> {
    config_hash: String,
    seed: u64,
    experiment: Experiment,
    results: T,
    assertions: Vec<Assertion>,
    passed: bool,
}

struct Ctx<'a> {
    cfg: &'a Config,
    out: PathBuf,
    hash: String,
}

impl Ctx<'_> {
    fn summary<T: Serialize>(&self, results: T, assertions: &[Assertion]) -> Result<()> {
        output::write_json(
            &self.out.join("report.json"),
            &SummaryReport {
                config_hash: self.hash.clone(),
                seed: self.cfg.seed,
                experiment: self.cfg.experiment,
                results,
                assertions: assertions.to_vec(),
                passed: assertions.iter().all(|a| a.passed),
            },
        )
    }
}

struct RunArtifacts {
    result: RunResult,
    report: EvalReport,
    gate_open_steps: usize,
}

/// Runs one sampler configuration and writes its artifacts into `dir`.
fn execute(ctx: &Ctx, world: &World, fields: &FieldSet, rc: &RunConfig, dir: &Path, label: &str) -> Result<RunArtifacts> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let result = run_algorithm1(rc, &world.schedule, fields, world.dataset.as_ref())?;
    let reference = world.reference(ctx.cfg)?;
    let report = evaluate_with_floor(
        &result.samples,
        &world.gm,
        &world.part,
        &reference,
        ctx.cfg.evaluation.coverage_floor,
    )?;
    let gate_open_steps = result.diagnostics.iter().flatten().filter(|d| d.gate_open).count();
    output::write_samples(&dir.join("samples.csv"), &result.samples, &world.gm, &world.part)?;
    output::write_diagnostics(&dir.join("diagnostics.csv"), &result.diagnostics)?;
    if let Some(tr) = &result.trajectories {
        output::write_trajectories(&dir.join("trajectories.csv"), tr, world.schedule.steps())?;
    }
    output::write_json(
        &dir.join("report.json"),
        &RunReport {
            config_hash: ctx.hash.clone(),
            seed: ctx.cfg.seed,
            experiment: ctx.cfg.experiment,
            label: label.to_string(),
            eval: EvalJson::from(&report),
            gate_open_steps,
        },
    )?;
    if world.gm.dim() == 2 {
        output::write_scatter(
            &dir.join("scatter.svg"),
            &[Panel {
                title: label.to_string(),
                samples: &result.samples,
                trajectories: None,
            }],
            &world.gm,
            &world.part,
        )?;
    }
    Ok(RunArtifacts {
        result,
        report,
        gate_open_steps,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

// ---------------------------------------------------------------- experiments

fn simulate(ctx: &Ctx) -> Result<Vec<Assertion>> {
    let world = World::new(ctx.cfg)?;
    let fields = world.fields(&ctx.cfg.guidance)?;
    let rc = run_config(ctx.cfg, world.gm.dim());
    execute(ctx, &world, &fields, &rc, &ctx.out, "simulate")?;
    Ok(Vec::new())
}

/// Label of a sweep value usable as a directory name.
fn scale_label(c: f64) -> String {
    format!("scale_{c}")
}

fn weight_sweep(ctx: &Ctx) -> Result<Vec<Assertion>> {
    let world = World::new(ctx.cfg)?;
    let fields = world.fields(&ctx.cfg.guidance)?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &c in &ctx.cfg.sweep.weight_scales {
        let mut rc = run_config(ctx.cfg, world.gm.dim());
        rc.weight_scale = c;
        let label = scale_label(c);
        let a = execute(ctx, &world, &fields, &rc, &ctx.out.join(&label), &label)?;
        rows.push(vec![
            num(c),
            num(a.report.hit_rate),
            a.report.unsafe_count.to_string(),
            fmt_opt(a.report.min_unsafe_distance),
            num(a.report.coverage),
            fmt_opt(a.report.energy_distance),
        ]);
        points.push((c, a.report));
    }
    output::write_table(
        &ctx.out.join("summary.csv"),
        &["weight_scale", "hit_rate", "unsafe_count", "min_unsafe_distance", "coverage", "energy_distance"],
        &rows,
    )?;
    let mut assertions = Vec::new();
    let hits: Vec<f64> = points.iter().map(|(_, r)| r.hit_rate).collect();
    let decreasing = hits.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
    assertions.push(Assertion::new(
        "hit_rate_decreasing",
        decreasing,
        format!("hit rates {hits:?} over weight scales {:?}", ctx.cfg.sweep.weight_scales),
    ));
    #[derive(Serialize)]
    struct Row {
        weight_scale: f64,
        #[serde(flatten)]
        eval: EvalJson,
    }
    let results: Vec<Row> = points
        .iter()
        .map(|(c, r)| Row {
            weight_scale: *c,
            eval: r.into(),
        })
        .collect();
    ctx.summary(results, &assertions)?;
    Ok(assertions)
}

fn threshold_label(i: usize, t: &ThresholdSpec) -> String {
    match t {
        ThresholdSpec::Value(v) => format!("threshold_{v}"),
        ThresholdSpec::Infinite => "threshold_inf".into(),
        ThresholdSpec::PerStep(_) => format!("threshold_per_step_{i}"),
    }
}

fn threshold_sweep(ctx: &Ctx) -> Result<Vec<Assertion>> {
    let world = World::new(ctx.cfg)?;
    let fields = world.fields(&ctx.cfg.guidance)?;
    let dim = world.gm.dim();

    let mut base_rc = run_config(ctx.cfg, dim);
    base_rc.mode = GuidanceMode::Baseline;
    let base_dir = ctx.out.join("baseline");
    let base = execute(ctx, &world, &fields, &base_rc, &base_dir, "baseline")?;
    let base_bytes = fs::read(base_dir.join("samples.csv"))?;

    let mut assertions = Vec::new();
    let mut rows = vec![vec![
        "baseline".to_string(),
        num(base.report.hit_rate),
        "0".to_string(),
        fmt_opt(base.report.energy_distance),
    ]];
    let mut constant_counts = Vec::new();
    #[derive(Serialize)]
    struct Row {
        threshold: ThresholdSpec,
        gate_open_steps: usize,
        #[serde(flatten)]
        eval: EvalJson,
    }
    let mut results = Vec::new();
    for (i, t) in ctx.cfg.sweep.thresholds.iter().enumerate() {
        let mut rc = run_config(ctx.cfg, dim);
        rc.gc.beta_threshold = threshold(t);
        rc.record_diagnostics = true;
        let label = threshold_label(i, t);
        let dir = ctx.out.join(&label);
        let a = execute(ctx, &world, &fields, &rc, &dir, &label)?;
        rows.push(vec![
            label.clone(),
            num(a.report.hit_rate),
            a.gate_open_steps.to_string(),
            fmt_opt(a.report.energy_distance),
        ]);
        match t {
            ThresholdSpec::Infinite => {
                let same = fs::read(dir.join("samples.csv"))? == base_bytes;
                assertions.push(Assertion::new(
                    "infinite_threshold_matches_baseline",
                    same,
                    format!("{label}/samples.csv {} baseline/samples.csv", if same { "equals" } else { "differs from" }),
                ));
            }
            ThresholdSpec::Value(v) => {
                if *v == 0.0 {
                    let records: Vec<_> = a.result.diagnostics.iter().flatten().collect();
                    let missed = records
                        .iter()
                        .filter(|d| rc.gc.critical_steps.contains(d.step) && d.beta > 0.0 && !d.gate_open)
                        .count();
                    let positive = records.iter().filter(|d| d.beta > 0.0).count();
                    assertions.push(Assertion::new(
                        "zero_threshold_opens_gate",
                        missed == 0 && positive > 0,
                        format!("{positive} critical steps with β > 0, {missed} with a closed gate"),
                    ));
                }
                constant_counts.push((*v, a.gate_open_steps));
            }
            ThresholdSpec::PerStep(_) => {}
        }
        results.push(Row {
            threshold: t.clone(),
            gate_open_steps: a.gate_open_steps,
            eval: (&a.report).into(),
        });
    }
    constant_counts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if constant_counts.len() > 1 {
        let ok = constant_counts.windows(2).all(|w| w[1].1 <= w[0].1);
        assertions.push(Assertion::new(
            "gate_open_count_non_increasing",
            ok,
            format!("(threshold, gate-open steps): {constant_counts:?}"),
        ));
    }
    output::write_table(
        &ctx.out.join("summary.csv"),
        &["run", "hit_rate", "gate_open_steps", "energy_distance"],
        &rows,
    )?;
    ctx.summary(results, &assertions)?;
    Ok(assertions)
}

fn trajectory_compare(ctx: &Ctx) -> Result<Vec<Assertion>> {
    let world = World::new(ctx.cfg)?;
    let fields = world.fields(&ctx.cfg.guidance)?;
    let mut rc = run_config(ctx.cfg, world.gm.dim());
    rc.record_trajectories = true;
    let mut base_rc = rc.clone();
    base_rc.mode = GuidanceMode::Baseline;
    let base = execute(ctx, &world, &fields, &base_rc, &ctx.out.join("baseline"), "baseline")?;
    let guided = execute(ctx, &world, &fields, &rc, &ctx.out.join("guided"), "guided")?;
    if world.gm.dim() == 2 {
        output::write_scatter(
            &ctx.out.join("trajectories.svg"),
            &[
                Panel {
                    title: "baseline".into(),
                    samples: &base.result.samples,
                    trajectories: base.result.trajectories.as_deref(),
                },
                Panel {
                    title: "guided".into(),
                    samples: &guided.result.samples,
                    trajectories: guided.result.trajectories.as_deref(),
                },
            ],
            &world.gm,
            &world.part,
        )?;
    }
    let assertions = vec![
        Assertion::new(
            "baseline_reaches_unsafe",
            base.report.unsafe_count >= 1,
            format!("{} of {} baseline samples unsafe", base.report.unsafe_count, base.report.n_samples),
        ),
        Assertion::new(
            "guided_avoids_unsafe",
            guided.report.unsafe_count == 0,
            format!("{} of {} guided samples unsafe", guided.report.unsafe_count, guided.report.n_samples),
        ),
    ];
    #[derive(Serialize)]
    struct Results {
        baseline: EvalJson,
        guided: EvalJson,
    }
    ctx.summary(
        Results {
            baseline: (&base.report).into(),
            guided: (&guided.report).into(),
        },
        &assertions,
    )?;
    Ok(assertions)
}

fn verify_theorem(ctx: &Ctx) -> Result<Vec<Assertion>> {
    let v = &ctx.cfg.verify;
    let s = build_schedule(&ctx.cfg.schedule)?;
    fs::create_dir_all(&ctx.out).with_context(|| format!("cannot create {}", ctx.out.display()))?;
    let reports: Vec<_> = (0..v.instances as u64)
        .map(|i| {
            let d = v.dims[i as usize % v.dims.len()];
            check_random_instance(ctx.cfg.seed, i, d, v.max_components, v.min_z_safe, &s, v.points)
        })
        .collect::<sdlab_core::Result<_>>()?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                r.dim.to_string(),
                r.components.to_string(),
                r.unsafe_components.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "),
                num(r.z_safe),
                num(r.residuals.theorem),
                num(r.residuals.decomposition),
            ]
        })
        .collect();
    output::write_table(
        &ctx.out.join("verify.csv"),
        &["instance", "dim", "components", "unsafe_components", "z_safe", "theorem_residual", "decomposition_residual"],
        &rows,
    )?;
    let worst_t = reports.iter().map(|r| r.residuals.theorem).fold(0.0, f64::max);
    let worst_d = reports.iter().map(|r| r.residuals.decomposition).fold(0.0, f64::max);
    let assertions = vec![
        Assertion::new(
            "theorem_identity",
            worst_t <= v.tolerance,
            format!("max relative residual {worst_t:e}, tolerance {:e}", v.tolerance),
        ),
        Assertion::new(
            "mixture_decomposition",
            worst_d <= v.decomposition_tolerance,
            format!("max relative residual {worst_d:e}, tolerance {:e}", v.decomposition_tolerance),
        ),
    ];
    #[derive(Serialize)]
    struct Results {
        instances: usize,
        points_per_instance: usize,
        max_theorem_residual: f64,
        max_decomposition_residual: f64,
    }
    ctx.summary(
        Results {
            instances: reports.len(),
            points_per_instance: v.points,
            max_theorem_residual: worst_t,
            max_decomposition_residual: worst_d,
        },
        &assertions,
    )?;
    Ok(assertions)
}

fn estimator_convergence(ctx: &Ctx) -> Result<Vec<Assertion>> {
    let c = &ctx.cfg.convergence;
    let s = Arc::new(build_schedule(&ctx.cfg.schedule)?);
    let gm = build_mixture(ctx.cfg.mixture.as_ref().context("mixture: required")?)?;
    let part = SafetyPartition::new(&gm, &ctx.cfg.unsafe_components).context("unsafe_components")?;
    let uns = part.unsafe_mixture(&gm).context("unsafe_components")?;
    fs::create_dir_all(&ctx.out).with_context(|| format!("cannot create {}", ctx.out.display()))?;
    let steps = c.grid_steps.clone().unwrap_or_else(|| vec![s.steps() / 2]);

    let mut rng = stream_rng(ctx.cfg.seed, GRID_STREAM);
    let grid = forward_grid_at(&mut rng, &uns, &s, &steps, c.grid_points);
    let rms: Vec<f64> = c
        .sizes
        .iter()
        .map(|&m| empirical_denoiser_rms(&uns, &s, &grid, m, c.replicates, ctx.cfg.seed))
        .collect::<sdlab_core::Result<_>>()?;
    let ratios: Vec<f64> = rms.windows(2).map(|w| w[1] / w[0]).collect();
    output::write_table(
        &ctx.out.join("convergence.csv"),
        &["dataset_size", "rms_error"],
        &c.sizes.iter().zip(&rms).map(|(m, r)| vec![m.to_string(), num(*r)]).collect::<Vec<_>>(),
    )?;

    let probes = forward_grid_at(&mut rng, &uns, &s, &steps, c.beta_probes);
    let checks = empirical_beta_check(&uns, &s, &probes, c.beta_dataset_size, c.beta_datasets, ctx.cfg.seed)?;
    let rows: Vec<Vec<String>> = checks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut row = vec![i.to_string(), b.t.to_string()];
            row.push(b.x_t.iter().map(|v| num(*v)).collect::<Vec<_>>().join(" "));
            row.extend([num(b.exact), num(b.mean), num(b.std_error), num(b.z_score())]);
            row
        })
        .collect();
    output::write_table(
        &ctx.out.join("beta_check.csv"),
        &["probe", "step", "x_t", "exact", "mean", "std_error", "z_score"],
        &rows,
    )?;

    let worst_z = checks.iter().map(|b| b.z_score()).fold(0.0, f64::max);
    let assertions = vec![
        Assertion::new(
            "rms_ratios_in_range",
            ratios.iter().all(|r| *r >= c.ratio_min && *r <= c.ratio_max),
            format!("rms {rms:?}, ratios {ratios:?}, allowed [{}, {}]", c.ratio_min, c.ratio_max),
        ),
        Assertion::new(
            "beta_unbiased",
            worst_z <= c.beta_max_z,
            format!("largest |mean − exact| = {worst_z:.3} standard errors, allowed {}", c.beta_max_z),
        ),
    ];
    #[derive(Serialize)]
    struct Results {
        sizes: Vec<usize>,
        rms_error: Vec<f64>,
        ratios: Vec<f64>,
        beta_max_z: f64,
    }
    ctx.summary(
        Results {
            sizes: c.sizes.clone(),
            rms_error: rms,
            ratios,
            beta_max_z: worst_z,
        },
        &assertions,
    )?;
    Ok(assertions)
}

/// Executes the configured experiment and writes its artifacts.
pub fn run_experiment(cfg: &Config, opts: &RunOptions) -> Result<Outcome> {
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sdlab-out"));
    fs::create_dir_all(&out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    let ctx = Ctx {
        cfg,
        out: out.clone(),
        hash: cfg.content_hash(),
    };
    output::write_json(&out.join("config.resolved.json"), cfg)?;
    let go = || -> Result<Vec<Assertion>> {
        match cfg.experiment {
            Experiment::Simulate => simulate(&ctx),
            Experiment::WeightSweep => weight_sweep(&ctx),
            Experiment::ThresholdSweep => threshold_sweep(&ctx),
            Experiment::TrajectoryCompare => trajectory_compare(&ctx),
            Experiment::VerifyTheorem => verify_theorem(&ctx),
            Experiment::EstimatorConvergence => estimator_convergence(&ctx),
        }
    };
    let assertions = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .context("cannot build thread pool")?
            .install(go)?,
        None => go()?,
    };
    Ok(Outcome {
        out_dir: out,
        assertions,
    })
}
