//! Experiment configuration: JSON schema, strict parsing with field paths,
//! defaults and canonical re-serialization.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use sdlab_core::guidance::{default_critical_start, ETA_SAFREE, ETA_SLD};

#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    VerifyTheorem,
    EstimatorConvergence,
    TrajectoryCompare,
    WeightSweep,
    ThresholdSweep,
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureSpec>,
    /// Path to a JSON file holding a mixture object; inlined on resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture_file: Option<String>,
    #[serde(default)]
    pub unsafe_components: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSource>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub guidance: GuidanceSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

// ---------------------------------------------------------------- mixture

/// Mixture weights; rejected at parse time unless positive and summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Weights(pub Vec<f64>);

impl<'de> Deserialize<'de> for Weights {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = Vec::<f64>::deserialize(d)?;
        if w.is_empty() {
            return Err(de::Error::custom("at least one weight is required"));
        }
        if let Some(bad) = w.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(de::Error::custom(format!("weights must be positive, got {bad}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(de::Error::custom(format!("weights sum to {sum}, expected 1 within 1e-12")));
        }
        Ok(Weights(w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub weights: Weights,
    pub means: Vec<Vec<f64>>,
    /// Full covariance matrices, row-major nested lists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariances: Option<Vec<Vec<Vec<f64>>>>,
    /// Per-component isotropic variances; alternative to `covariances`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
}

// ---------------------------------------------------------------- dataset

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// `sample:M` draws `M` points from the unsafe sub-mixture.
    Sample(usize),
    /// CSV file, one point per row, no header.
    Csv(String),
}

impl Serialize for DatasetSource {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            DatasetSource::Sample(m) => s.serialize_str(&format!("sample:{m}")),
            DatasetSource::Csv(p) => s.serialize_str(p),
        }
    }
}

impl<'de> Deserialize<'de> for DatasetSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        match raw.strip_prefix("sample:") {
            Some(m) => match m.parse::<usize>() {
                Ok(m) if m > 0 => Ok(DatasetSource::Sample(m)),
                _ => Err(de::Error::custom(format!("expected sample:M with M ≥ 1, got {raw:?}"))),
            },
            None if raw.is_empty() => Err(de::Error::custom("empty dataset path")),
            None => Ok(DatasetSource::Csv(raw)),
        }
    }
}

// ---------------------------------------------------------------- schedule

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKindSpec {
    VpLinear,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_kind")]
    pub kind: ScheduleKindSpec,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

fn default_kind() -> ScheduleKindSpec {
    ScheduleKindSpec::VpLinear
}

fn default_steps() -> usize {
    1000
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            steps: default_steps(),
            beta_min: None,
            beta_max: None,
            offset: None,
        }
    }
}

// ---------------------------------------------------------------- sampler

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverSpec {
    Ddpm,
    Ddim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    StandardNormal,
    FixedPoints(Vec<Vec<f64>>),
    /// `count` points evenly spaced on a circle of `radius` in the first two
    /// coordinates, starting on the positive first axis.
    Ring { count: usize, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    #[serde(default = "default_solver")]
    pub solver: SolverSpec,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_init")]
    pub init: InitSpec,
    #[serde(default)]
    pub trajectories: bool,
    #[serde(default = "yes")]
    pub diagnostics: bool,
}

fn default_solver() -> SolverSpec {
    SolverSpec::Ddpm
}

fn default_n_samples() -> usize {
    1000
}

fn default_init() -> InitSpec {
    InitSpec::StandardNormal
}

fn yes() -> bool {
    true
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            solver: default_solver(),
            n_samples: default_n_samples(),
            init: default_init(),
            trajectories: false,
            diagnostics: true,
        }
    }
}

// ---------------------------------------------------------------- guidance

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
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

/// Where a safe-term ingredient comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceSpec {
    Exact,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Diffusion,
    RbfSld,
    RbfSafree,
    Rbf(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdSpec {
    Value(f64),
    Infinite,
    PerStep(Vec<f64>),
}

impl Serialize for ThresholdSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ThresholdSpec::Value(v) => s.serialize_f64(*v),
            ThresholdSpec::Infinite => s.serialize_str("inf"),
            ThresholdSpec::PerStep(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ThresholdSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ThresholdSpec;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative number, \"inf\", or a list of per-step numbers")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ThresholdSpec, E> {
                if v >= 0.0 {
                    Ok(ThresholdSpec::Value(v))
                } else {
                    Err(E::custom(format!("threshold must be nonnegative, got {v}")))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ThresholdSpec, E> {
                Ok(ThresholdSpec::Value(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ThresholdSpec, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ThresholdSpec, E> {
                match v {
                    "inf" | "infinity" => Ok(ThresholdSpec::Infinite),
                    _ => Err(E::custom(format!("unknown threshold {v:?}"))),
                }
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<ThresholdSpec, A::Error> {
                let mut out = Vec::new();
                while let Some(v) = seq.next_element::<f64>()? {
                    if !(v >= 0.0) {
                        return Err(de::Error::custom(format!("threshold must be nonnegative, got {v}")));
                    }
                    out.push(v);
                }
                Ok(ThresholdSpec::PerStep(out))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CriticalSpec {
    /// Top 22% of steps nearest `T`; resolved to a range.
    Default,
    All,
    None,
    Steps(Vec<usize>),
    Range { from: usize, to: usize },
}

impl Serialize for CriticalSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CriticalSpec::Default => s.serialize_str("default"),
            CriticalSpec::All => s.serialize_str("all"),
            CriticalSpec::None => s.serialize_str("none"),
            CriticalSpec::Steps(v) => v.serialize(s),
            CriticalSpec::Range { from, to } => {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("from", from)?;
                m.serialize_entry("to", to)?;
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for CriticalSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = CriticalSpec;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"default\", \"all\", \"none\", a list of steps, or {\"from\", \"to\"}")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<CriticalSpec, E> {
                match v {
                    "default" => Ok(CriticalSpec::Default),
                    "all" => Ok(CriticalSpec::All),
                    "none" => Ok(CriticalSpec::None),
                    _ => Err(E::custom(format!("unknown critical step set {v:?}"))),
                }
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<CriticalSpec, A::Error> {
                let mut out = Vec::new();
                while let Some(v) = seq.next_element::<usize>()? {
                    out.push(v);
                }
                Ok(CriticalSpec::Steps(out))
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<CriticalSpec, A::Error> {
                let (mut from, mut to) = (None, None);
                while let Some(key) = map.next_key::<String>()? {
                    match key.as_str() {
                        "from" => from = Some(map.next_value::<usize>()?),
                        "to" => to = Some(map.next_value::<usize>()?),
                        other => return Err(de::Error::unknown_field(other, &["from", "to"])),
                    }
                }
                Ok(CriticalSpec::Range {
                    from: from.ok_or_else(|| de::Error::missing_field("from"))?,
                    to: to.ok_or_else(|| de::Error::missing_field("to"))?,
                })
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceSpec {
    #[serde(default = "default_mode")]
    pub mode: ModeSpec,
    /// Source of β: closed-form β* or the dataset estimate.
    #[serde(default = "default_source")]
    pub weight: SourceSpec,
    #[serde(default = "default_source")]
    pub unsafe_denoiser: SourceSpec,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub mu_gamma: f64,
    #[serde(default)]
    pub mu_max: f64,
    /// Defaults by mode: 0.33 with SAFREE, 0.03 with SLD, 1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_threshold")]
    pub beta_threshold: ThresholdSpec,
    #[serde(default = "default_critical")]
    pub critical_steps: CriticalSpec,
    #[serde(default = "one")]
    pub sr_radius: f64,
    #[serde(default = "one")]
    pub weight_scale: f64,
    /// Positive condition as a component subset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Vec<usize>>,
    /// Predefined unsafe condition; defaults to the unsafe components.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_condition: Option<Vec<usize>>,
}

fn default_mode() -> ModeSpec {
    ModeSpec::Baseline
}

fn default_source() -> SourceSpec {
    SourceSpec::Exact
}

fn default_kernel() -> KernelSpec {
    KernelSpec::Diffusion
}

fn one() -> f64 {
    1.0
}

fn default_threshold() -> ThresholdSpec {
    ThresholdSpec::Value(0.0)
}

fn default_critical() -> CriticalSpec {
    CriticalSpec::Default
}

impl Default for GuidanceSpec {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            weight: default_source(),
            unsafe_denoiser: default_source(),
            kernel: default_kernel(),
            lambda: 1.0,
            mu_gamma: 0.0,
            mu_max: 0.0,
            eta: None,
            beta_threshold: default_threshold(),
            critical_steps: default_critical(),
            sr_radius: 1.0,
            weight_scale: 1.0,
            condition: None,
            negative_condition: None,
        }
    }
}

// ---------------------------------------------------------------- experiment sections

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_scales")]
    pub weight_scales: Vec<f64>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<ThresholdSpec>,
}

fn default_scales() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_thresholds() -> Vec<ThresholdSpec> {
    vec![ThresholdSpec::Value(0.0), ThresholdSpec::Infinite]
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            weight_scales: default_scales(),
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_max_components")]
    pub max_components: usize,
    #[serde(default = "default_min_z_safe")]
    pub min_z_safe: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_decomposition_tolerance")]
    pub decomposition_tolerance: f64,
}

fn default_instances() -> usize {
    20
}

fn default_points() -> usize {
    50
}

fn default_dims() -> Vec<usize> {
    vec![1, 2, 8]
}

fn default_max_components() -> usize {
    8
}

fn default_min_z_safe() -> f64 {
    0.2
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_decomposition_tolerance() -> f64 {
    1e-10
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            points: default_points(),
            dims: default_dims(),
            max_components: default_max_components(),
            min_z_safe: default_min_z_safe(),
            tolerance: default_tolerance(),
            decomposition_tolerance: default_decomposition_tolerance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Steps of the evaluation grid; defaults to 10%, 30%, 50%, 70% of `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_steps: Option<Vec<usize>>,
    #[serde(default = "default_ratio_min")]
    pub ratio_min: f64,
    #[serde(default = "default_ratio_max")]
    pub ratio_max: f64,
    #[serde(default = "default_beta_datasets")]
    pub beta_datasets: usize,
    #[serde(default = "default_beta_dataset_size")]
    pub beta_dataset_size: usize,
    #[serde(default = "default_beta_probes")]
    pub beta_probes: usize,
    #[serde(default = "default_max_z")]
    pub beta_max_z: f64,
}

fn default_sizes() -> Vec<usize> {
    vec![100, 1000, 10000]
}

fn default_replicates() -> usize {
    5
}

fn default_grid_points() -> usize {
    40
}

fn default_ratio_min() -> f64 {
    0.15
}

fn default_ratio_max() -> f64 {
    0.7
}

fn default_beta_datasets() -> usize {
    200
}

fn default_beta_dataset_size() -> usize {
    500
}

fn default_beta_probes() -> usize {
    10
}

fn default_max_z() -> f64 {
    4.0
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            sizes: default_sizes(),
            replicates: default_replicates(),
            grid_points: default_grid_points(),
            grid_steps: None,
            ratio_min: default_ratio_min(),
            ratio_max: default_ratio_max(),
            beta_datasets: default_beta_datasets(),
            beta_dataset_size: default_beta_dataset_size(),
            beta_probes: default_beta_probes(),
            beta_max_z: default_max_z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSpec {
    /// Draws from the safe sub-mixture for the energy distance; 0 disables it.
    #[serde(default = "default_reference_size")]
    pub reference_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_floor: Option<f64>,
}

fn default_reference_size() -> usize {
    1000
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        Self {
            reference_size: default_reference_size(),
            coverage_floor: None,
        }
    }
}

// ---------------------------------------------------------------- parsing

/// Parses JSON text into a config without resolving defaults that depend on
/// other fields. Errors carry the JSON path of the offending field.
pub fn parse_str(text: &str) -> CResult<Config> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::new(if path == "." { String::new() } else { path }, e.into_inner().to_string())
    })
}

fn parse_mixture_file(path: &Path) -> CResult<MixtureSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("mixture_file", format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        ConfigError::new(
            format!("mixture_file({}).{}", path.display(), e.path()),
            e.into_inner().to_string(),
        )
    })
}

/// Reads, parses and resolves a config file. Relative paths inside it are
/// taken relative to the file's directory.
pub fn load(path: &Path) -> CResult<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_str(&text)?.resolve(&base)
}

fn absolutize(base: &Path, p: &str) -> String {
    let pb = PathBuf::from(p);
    let joined = if pb.is_absolute() { pb } else { base.join(pb) };
    let abs = if joined.is_absolute() {
        joined
    } else {
        std::env::current_dir().map(|c| c.join(&joined)).unwrap_or(joined)
    };
    abs.to_string_lossy().into_owned()
}

impl Config {
    /// Inlines the mixture file, makes paths absolute, fills mode- and
    /// schedule-dependent defaults, then validates. Idempotent.
    pub fn resolve(mut self, base: &Path) -> CResult<Config> {
        if let Some(file) = self.mixture_file.take() {
            if self.mixture.is_some() {
                return Err(ConfigError::new("mixture_file", "give either mixture or mixture_file, not both"));
            }
            self.mixture = Some(parse_mixture_file(Path::new(&absolutize(base, &file)))?);
        }
        if let Some(DatasetSource::Csv(p)) = &self.dataset {
            self.dataset = Some(DatasetSource::Csv(absolutize(base, p)));
        }
        if let Some(out) = &self.output {
            self.output = Some(absolutize(base, out));
        }

        let s = &mut self.schedule;
        match s.kind {
            ScheduleKindSpec::VpLinear => {
                if s.offset.is_some() {
                    return Err(ConfigError::new("schedule.offset", "only valid for the cosine schedule"));
                }
                s.beta_min.get_or_insert(1e-4);
                s.beta_max.get_or_insert(0.02);
            }
            ScheduleKindSpec::Cosine => {
                if s.beta_min.is_some() || s.beta_max.is_some() {
                    return Err(ConfigError::new("schedule", "beta_min/beta_max only valid for vp_linear"));
                }
                s.offset.get_or_insert(0.008);
            }
        }
        let steps = s.steps;

        let g = &mut self.guidance;
        if g.eta.is_none() {
            g.eta = Some(match g.mode {
                ModeSpec::SafreeSafe => ETA_SAFREE,
                ModeSpec::SldSafe => ETA_SLD,
                _ => 1.0,
            });
        }
        if g.critical_steps == CriticalSpec::Default {
            g.critical_steps = CriticalSpec::Range {
                from: default_critical_start(steps),
                to: steps,
            };
        }
        if self.convergence.grid_steps.is_none() {
            self.convergence.grid_steps = Some(
                [0.1, 0.3, 0.5, 0.7]
                    .iter()
                    .map(|f| ((f * steps as f64).round() as usize).clamp(1, steps))
                    .collect(),
            );
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> CResult<()> {
        let err = |p: &str, m: String| Err(ConfigError::new(p, m));
        if self.schedule.steps < 2 {
            return err("schedule.steps", format!("need at least 2 steps, got {}", self.schedule.steps));
        }
        let steps = self.schedule.steps;
        if self.experiment != Experiment::VerifyTheorem {
            let Some(m) = &self.mixture else {
                return err("mixture", "a mixture (or mixture_file) is required".into());
            };
            validate_mixture(m)?;
            let k = m.weights.0.len();
            for (i, c) in self.unsafe_components.iter().enumerate() {
                if *c >= k {
                    return err(&format!("unsafe_components[{i}]"), format!("component {c} out of range 0..{k}"));
                }
            }
            for (name, list) in [("condition", &self.guidance.condition), ("negative_condition", &self.guidance.negative_condition)] {
                if let Some(list) = list {
                    if list.is_empty() {
                        return err(&format!("guidance.{name}"), "condition subset must be nonempty".into());
                    }
                    if let Some(c) = list.iter().find(|c| **c >= k) {
                        return err(&format!("guidance.{name}"), format!("component {c} out of range 0..{k}"));
                    }
                }
            }
        }
        let g = &self.guidance;
        for (name, v) in [("mu_gamma", g.mu_gamma), ("mu_max", g.mu_max), ("weight_scale", g.weight_scale)] {
            if !(v >= 0.0 && v.is_finite()) {
                return err(&format!("guidance.{name}"), format!("must be nonnegative, got {v}"));
            }
        }
        if let Some(eta) = g.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return err("guidance.eta", format!("must be nonnegative, got {eta}"));
            }
        }
        if !(g.sr_radius > 0.0 && g.sr_radius.is_finite()) {
            return err("guidance.sr_radius", format!("must be positive, got {}", g.sr_radius));
        }
        if !g.lambda.is_finite() {
            return err("guidance.lambda", "must be finite".into());
        }
        if let KernelSpec::Rbf(h) = g.kernel {
            if !(h > 0.0 && h.is_finite()) {
                return err("guidance.kernel", format!("bandwidth must be positive, got {h}"));
            }
        }
        validate_threshold("guidance.beta_threshold", &g.beta_threshold, steps)?;
        for (i, t) in self.sweep.thresholds.iter().enumerate() {
            validate_threshold(&format!("sweep.thresholds[{i}]"), t, steps)?;
        }
        for (i, c) in self.sweep.weight_scales.iter().enumerate() {
            if !(*c >= 0.0 && c.is_finite()) {
                return err(&format!("sweep.weight_scales[{i}]"), format!("must be nonnegative, got {c}"));
            }
        }
        match &g.critical_steps {
            CriticalSpec::Steps(v) => {
                if let Some(t) = v.iter().find(|t| **t == 0 || **t > steps) {
                    return err("guidance.critical_steps", format!("step {t} outside 1..={steps}"));
                }
            }
            CriticalSpec::Range { from, to } => {
                if *from == 0 || *to > steps || from > to {
                    return err("guidance.critical_steps", format!("range {from}..={to} not within 1..={steps}"));
                }
            }
            _ => {}
        }
        if self.sampler.n_samples == 0 {
            return err("sampler.n_samples", "must be at least 1".into());
        }
        match &self.sampler.init {
            InitSpec::FixedPoints(p) if p.is_empty() => {
                return err("sampler.init.fixed_points", "need at least one point".into());
            }
            InitSpec::Ring { count, radius } if *count == 0 || !(*radius >= 0.0) => {
                return err("sampler.init.ring", "count must be ≥ 1 and radius ≥ 0".into());
            }
            _ => {}
        }
        if let Some(m) = &self.mixture {
            let d = m.means.first().map_or(0, Vec::len);
            match &self.sampler.init {
                InitSpec::FixedPoints(p) => {
                    if let Some(i) = p.iter().position(|x| x.len() != d) {
                        return err(&format!("sampler.init.fixed_points[{i}]"), format!("expected {d} coordinates"));
                    }
                }
                InitSpec::Ring { .. } if d < 2 => {
                    return err("sampler.init.ring", "ring inits need dimension ≥ 2".into());
                }
                _ => {}
            }
        }
        let needs_dataset = g.weight == SourceSpec::Empirical
            || g.unsafe_denoiser == SourceSpec::Empirical
            || g.mode == ModeSpec::SparseRepellency;
        let uses_guidance = matches!(
            self.experiment,
            Experiment::Simulate | Experiment::WeightSweep | Experiment::ThresholdSweep | Experiment::TrajectoryCompare
        );
        if uses_guidance && needs_dataset && self.dataset.is_none() {
            return err("dataset", "the configured guidance needs an unsafe dataset".into());
        }
        if uses_guidance && self.unsafe_components.is_empty() && needs_dataset {
            return err("unsafe_components", "an unsafe dataset needs at least one unsafe component".into());
        }
        let c = &self.convergence;
        if let Some(gs) = &c.grid_steps {
            if gs.is_empty() {
                return err("convergence.grid_steps", "need at least one step".into());
            }
            if let Some(t) = gs.iter().find(|t| **t == 0 || **t > steps) {
                return err("convergence.grid_steps", format!("step {t} outside 1..={steps}"));
            }
        }
        if c.sizes.len() < 2 || c.sizes.iter().any(|m| *m == 0) {
            return err("convergence.sizes", "need at least two positive dataset sizes".into());
        }
        if c.replicates == 0 || c.grid_points == 0 || c.beta_datasets < 2 || c.beta_dataset_size == 0 || c.beta_probes == 0 {
            return err("convergence", "counts must be positive (beta_datasets ≥ 2)".into());
        }
        let v = &self.verify;
        if v.instances == 0 || v.points == 0 || v.dims.is_empty() || v.dims.contains(&0) {
            return err("verify", "instances, points and dims must be positive".into());
        }
        if v.max_components < 2 {
            return err("verify.max_components", "need at least 2 components for a partition".into());
        }
        if !(v.min_z_safe > 0.0 && v.min_z_safe < 1.0) {
            return err("verify.min_z_safe", format!("must lie in (0, 1), got {}", v.min_z_safe));
        }
        if let Some(f) = self.evaluation.coverage_floor {
            if !(0.0..=1.0).contains(&f) {
                return err("evaluation.coverage_floor", format!("must lie in [0, 1], got {f}"));
            }
        }
        Ok(())
    }

    /// Canonical JSON text of the config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON with the output directory removed, so
    /// moving the output does not change the hash.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.output = None;
        let digest = Sha256::digest(serde_json::to_string(&c).expect("config serializes").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn validate_threshold(path: &str, t: &ThresholdSpec, steps: usize) -> CResult<()> {
    if let ThresholdSpec::PerStep(v) = t {
        if v.len() != steps {
            return Err(ConfigError::new(path, format!("per-step thresholds need {steps} entries, got {}", v.len())));
        }
    }
    Ok(())
}

fn validate_mixture(m: &MixtureSpec) -> CResult<()> {
    let k = m.weights.0.len();
    if m.means.len() != k {
        return Err(ConfigError::new("mixture.means", format!("expected {k} means, got {}", m.means.len())));
    }
    let d = m.means[0].len();
    if d == 0 {
        return Err(ConfigError::new("mixture.means[0]", "dimension must be at least 1"));
    }
    if let Some(i) = m.means.iter().position(|x| x.len() != d) {
        return Err(ConfigError::new(format!("mixture.means[{i}]"), format!("expected {d} coordinates")));
    }
    match (&m.covariances, &m.variances) {
        (Some(_), Some(_)) => Err(ConfigError::new("mixture", "give either covariances or variances, not both")),
        (None, None) => Err(ConfigError::new("mixture", "covariances or variances are required")),
        (None, Some(v)) => {
            if v.len() != k {
                return Err(ConfigError::new("mixture.variances", format!("expected {k} entries, got {}", v.len())));
            }
            if let Some(i) = v.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(ConfigError::new(format!("mixture.variances[{i}]"), "must be positive"));
            }
            Ok(())
        }
        (Some(c), None) => {
            if c.len() != k {
                return Err(ConfigError::new("mixture.covariances", format!("expected {k} matrices, got {}", c.len())));
            }
            for (i, m) in c.iter().enumerate() {
                if m.len() != d || m.iter().any(|row| row.len() != d) {
                    return Err(ConfigError::new(format!("mixture.covariances[{i}]"), format!("expected a {d}×{d} matrix")));
                }
            }
            Ok(())
        }
    }
}
