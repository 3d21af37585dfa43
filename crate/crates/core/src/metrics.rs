//! Sample-set evaluation: component assignment, unsafe hit rate, safe-mode
//! coverage and energy distance to a reference set.

use crate::error::{Error, Result};
use crate::field::Point;
use crate::mixture::{GaussianMixture, SafetyPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classification {
    pub component: usize,
    pub is_unsafe: bool,
}

/// Assigns `x` to `argmax_k w_k N(x; μ_k, Σ_k)`, lowest index on ties.
pub fn classify(x: &Point, gm: &GaussianMixture, part: &SafetyPartition) -> Result<Classification> {
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("cannot classify a non-finite sample".into()));
    }
    let logs = gm.component_log_densities(x)?;
    let mut best = 0;
    for (k, l) in logs.iter().enumerate() {
        if *l > logs[best] {
            best = k;
        }
    }
    Ok(Classification {
        component: best,
        is_unsafe: part.is_unsafe(best),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_samples: usize,
    pub hit_rate: f64,
    pub unsafe_count: usize,
    pub component_counts: Vec<usize>,
    pub coverage: f64,
    pub coverage_floor: f64,
    pub energy_distance: Option<f64>,
    /// Smallest distance from any sample to any unsafe component mean.
    pub min_unsafe_distance: Option<f64>,
}

fn dist(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_pairwise(x: &[Point], y: &[Point]) -> f64 {
    let mut total = 0.0;
    for a in x {
        let mut row = 0.0;
        for b in y {
            row += dist(a, b);
        }
        total += row;
    }
    total / (x.len() as f64 * y.len() as f64)
}

/// Two-sample energy statistic `2E|X−Y| − E|X−X'| − E|Y−Y'|` with all
/// expectations taken over every pair (V-statistic), so it is nonnegative
/// and zero for identical sets.
pub fn energy_distance(x: &[Point], y: &[Point]) -> f64 {
    if x.is_empty() || y.is_empty() {
        return 0.0;
    }
    let v = 2.0 * mean_pairwise(x, y) - mean_pairwise(x, x) - mean_pairwise(y, y);
    v.max(0.0)
}

pub fn evaluate(
    samples: &[Point],
    gm: &GaussianMixture,
    part: &SafetyPartition,
    reference: &[Point],
) -> Result<EvalReport> {
    evaluate_with_floor(samples, gm, part, reference, None)
}

/// Like [`evaluate`]; `coverage_floor` defaults to `0.5 / |safe components|`.
pub fn evaluate_with_floor(
    samples: &[Point],
    gm: &GaussianMixture,
    part: &SafetyPartition,
    reference: &[Point],
    coverage_floor: Option<f64>,
) -> Result<EvalReport> {
    let mut counts = vec![0usize; gm.n_components()];
    for x in samples {
        counts[classify(x, gm, part)?.component] += 1;
    }
    let n = samples.len();
    let unsafe_count: usize = part.unsafe_components().iter().map(|&k| counts[k]).sum();
    let safe = part.safe_components();
    let floor = coverage_floor.unwrap_or(if safe.is_empty() { 0.0 } else { 0.5 / safe.len() as f64 });
    let coverage = if safe.is_empty() || n == 0 {
        0.0
    } else {
        let covered = safe.iter().filter(|&&k| counts[k] as f64 / n as f64 >= floor).count();
        covered as f64 / safe.len() as f64
    };
    let unsafe_means: Vec<&Point> = part.unsafe_components().iter().map(|&k| &gm.means()[k]).collect();
    let min_unsafe_distance = samples
        .iter()
        .flat_map(|x| unsafe_means.iter().map(move |m| dist(x, m)))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
    Ok(EvalReport {
        n_samples: n,
        hit_rate: if n == 0 { 0.0 } else { unsafe_count as f64 / n as f64 },
        unsafe_count,
        component_counts: counts,
        coverage,
        coverage_floor: floor,
        energy_distance: (!reference.is_empty()).then(|| energy_distance(samples, reference)),
        min_unsafe_distance,
    })
}
