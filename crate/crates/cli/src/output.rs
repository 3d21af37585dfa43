//! Artifact writers: CSV tables, JSON reports and SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use sdlab_core::metrics::{classify, EvalReport};
use sdlab_core::mixture::{GaussianMixture, SafetyPartition};
use sdlab_core::sampler::StepDiagnostic;
use sdlab_core::Point;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))
}

fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_samples(path: &Path, samples: &[Point], gm: &GaussianMixture, part: &SafetyPartition) -> Result<()> {
    let mut w = writer(path)?;
    let d = gm.dim();
    let mut header = vec!["sample_index".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend(["component".to_string(), "safe".to_string()]);
    w.write_record(&header)?;
    for (i, x) in samples.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(x.iter().map(|v| num(*v)));
        match classify(x, gm, part) {
            Ok(c) => row.extend([c.component.to_string(), (!c.is_unsafe).to_string()]),
            Err(_) => row.extend(["".to_string(), "".to_string()]),
        }
        w.write_record(&row)?;
    }
    finish(w, path)
}

pub fn write_diagnostics(path: &Path, diagnostics: &[Vec<StepDiagnostic>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["step", "sample_index", "beta", "gate_open", "applied_weight"])?;
    for (i, per_sample) in diagnostics.iter().enumerate() {
        for r in per_sample {
            w.write_record([
                r.step.to_string(),
                i.to_string(),
                num(r.beta),
                r.gate_open.to_string(),
                num(r.applied_weight),
            ])?;
        }
    }
    finish(w, path)
}

/// One row per sample per step, `x_T` first.
pub fn write_trajectories(path: &Path, trajectories: &[Vec<Point>], steps: usize) -> Result<()> {
    let mut w = writer(path)?;
    let d = trajectories.first().and_then(|t| t.first()).map_or(0, |x| x.len());
    let mut header = vec!["sample_index".to_string(), "step".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (i, tr) in trajectories.iter().enumerate() {
        for (j, x) in tr.iter().enumerate() {
            let mut row = vec![i.to_string(), (steps - j).to_string()];
            row.extend(x.iter().map(|v| num(*v)));
            w.write_record(&row)?;
        }
    }
    finish(w, path)
}

/// Writes a table whose cells are already formatted.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    finish(w, path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalJson {
    pub n_samples: usize,
    pub hit_rate: f64,
    pub unsafe_count: usize,
    pub component_counts: Vec<usize>,
    pub coverage: f64,
    pub coverage_floor: f64,
    pub energy_distance: Option<f64>,
    pub min_unsafe_distance: Option<f64>,
}

impl From<&EvalReport> for EvalJson {
    fn from(r: &EvalReport) -> Self {
        Self {
            n_samples: r.n_samples,
            hit_rate: r.hit_rate,
            unsafe_count: r.unsafe_count,
            component_counts: r.component_counts.clone(),
            coverage: r.coverage,
            coverage_floor: r.coverage_floor,
            energy_distance: r.energy_distance,
            min_unsafe_distance: r.min_unsafe_distance,
        }
    }
}

// ---------------------------------------------------------------- svg

const SIZE: f64 = 480.0;
const SAFE_COLOR: &str = "#1f77b4";
const UNSAFE_COLOR: &str = "#d62728";

pub struct Panel<'a> {
    pub title: String,
    pub samples: &'a [Point],
    pub trajectories: Option<&'a [Vec<Point>]>,
}

struct Frame {
    x0: f64,
    y0: f64,
    span: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a Point>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            if p.len() < 2 || !p[0].is_finite() || !p[1].is_finite() {
                continue;
            }
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        if !lo[0].is_finite() {
            return Frame { x0: -1.0, y0: -1.0, span: 2.0 };
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9) * 1.1;
        let cx = 0.5 * (lo[0] + hi[0]);
        let cy = 0.5 * (lo[1] + hi[1]);
        Frame {
            x0: cx - 0.5 * span,
            y0: cy - 0.5 * span,
            span,
        }
    }

    fn map(&self, p: &Point) -> (f64, f64) {
        ((p[0] - self.x0) / self.span * SIZE, SIZE - (p[1] - self.y0) / self.span * SIZE)
    }
}

/// Side-by-side 2-D panels sharing one axis-equal frame. Samples are
/// coloured by classification; unsafe component means are drawn as black
/// rings of radius two standard deviations.
pub fn write_scatter(path: &Path, panels: &[Panel], gm: &GaussianMixture, part: &SafetyPartition) -> Result<()> {
    let all = panels.iter().flat_map(|p| {
        p.samples
            .iter()
            .chain(p.trajectories.into_iter().flat_map(|t| t.iter().flatten()))
    });
    let frame = Frame::fit(all.chain(gm.means().iter()));
    let width = SIZE * panels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" viewBox="0 0 {width} {}">"#,
        SIZE + 24.0,
        SIZE + 24.0
    );
    let colour = |x: &Point| match classify(x, gm, part) {
        Ok(c) if c.is_unsafe => UNSAFE_COLOR,
        _ => SAFE_COLOR,
    };
    for (k, panel) in panels.iter().enumerate() {
        let dx = k as f64 * SIZE;
        let _ = writeln!(s, r#"<g transform="translate({dx},24)">"#);
        let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white" stroke="gray"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="-6" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
            SIZE / 2.0,
            panel.title
        );
        if let Some(trs) = panel.trajectories {
            for tr in trs {
                let Some(last) = tr.last() else { continue };
                let pts: Vec<String> = tr
                    .iter()
                    .map(|p| {
                        let (x, y) = frame.map(p);
                        format!("{x:.2},{y:.2}")
                    })
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1" stroke-opacity="0.7"/>"#,
                    pts.join(" "),
                    colour(last)
                );
            }
        }
        for p in panel.samples {
            if p.len() < 2 || !p[0].is_finite() || !p[1].is_finite() {
                continue;
            }
            let (x, y) = frame.map(p);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.6" fill="{}" fill-opacity="0.5"/>"#, colour(p));
        }
        for (c, m) in gm.means().iter().enumerate() {
            let (x, y) = frame.map(m);
            let sd = (gm.covariances()[c].trace() / gm.dim() as f64).sqrt();
            let r = 2.0 * sd / frame.span * SIZE;
            if part.is_unsafe(c) {
                let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="none" stroke="black" stroke-width="2"/>"#);
            }
            let _ = writeln!(s, r#"<path d="M{:.2},{y:.2}h8M{x:.2},{:.2}v8" stroke="black" stroke-width="1.5"/>"#, x - 4.0, y - 4.0);
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))
}
