use std::sync::Arc;

use nalgebra::{dvector, DVector};
use sdlab_core::empirical::{empirical_beta_evaluator, empirical_unsafe_denoiser, KernelConfig, UnsafeDataset};
use sdlab_core::guidance::{BetaThreshold, CriticalSteps};
use sdlab_core::mixture::*;
use sdlab_core::sampler::*;
use sdlab_core::schedule::{make_schedule, NoiseSchedule, ScheduleParams};
use sdlab_core::Point;

fn bits(points: &[Point]) -> Vec<u64> {
    points.iter().flat_map(|p| p.iter().map(|v| v.to_bits())).collect()
}

struct Setup {
    s: Arc<NoiseSchedule>,
    gm: GaussianMixture,
    fields: FieldSet,
    ds: Arc<UnsafeDataset>,
}

fn setup() -> Setup {
    let s = Arc::new(make_schedule(100, ScheduleParams::VpLinear { beta_min: 1e-3, beta_max: 0.15 }).unwrap());
    let gm = GaussianMixture::isotropic(
        vec![0.25, 0.25, 0.25, 0.25],
        vec![dvector![0.0, 0.0], dvector![0.0, 3.0], dvector![2.6, -1.5], dvector![-2.6, -1.5]],
        &[0.25; 4],
    )
    .unwrap();
    let part = SafetyPartition::new(&gm, &[0]).unwrap();
    let uns = part.unsafe_mixture(&gm).unwrap();
    let mut rng = stream_rng(5, DATASET_STREAM);
    let ds = Arc::new(UnsafeDataset::new((0..200).map(|_| uns.sample(&mut rng)).collect()).unwrap());
    let mut fields = FieldSet::new(exact_denoiser(&gm, &s).unwrap());
    fields.unsafe_hat = Some(empirical_unsafe_denoiser(ds.clone(), s.clone(), KernelConfig::Diffusion).unwrap());
    fields.beta = Some(empirical_beta_evaluator(ds.clone(), s.clone(), KernelConfig::Diffusion));
    Setup { s, gm, fields, ds }
}

fn run(st: &Setup, rc: &RunConfig) -> RunResult {
    run_algorithm1(rc, &st.s, &st.fields, Some(&st.ds)).unwrap()
}

#[test]
fn identical_config_gives_identical_result() {
    let st = setup();
    for solver in [Solver::Ddpm, Solver::Ddim] {
        let mut rc = RunConfig::new(solver, GuidanceMode::Safe, 64, 42);
        rc.record_diagnostics = true;
        rc.record_trajectories = true;
        let (a, b) = (run(&st, &rc), run(&st, &rc));
        assert_eq!(bits(&a.samples), bits(&b.samples));
        assert_eq!(a.diagnostics, b.diagnostics);
        let mut other = rc.clone();
        other.seed = 43;
        assert_ne!(bits(&a.samples), bits(&run(&st, &other).samples));
    }
}

#[test]
fn per_sample_streams_do_not_depend_on_batch_size() {
    let st = setup();
    let small = run(&st, &RunConfig::new(Solver::Ddpm, GuidanceMode::Safe, 10, 8));
    let large = run(&st, &RunConfig::new(Solver::Ddpm, GuidanceMode::Safe, 40, 8));
    assert_eq!(bits(&small.samples), bits(&large.samples[..10]));
}

#[test]
fn closed_gates_reproduce_baseline() {
    let st = setup();
    for solver in [Solver::Ddpm, Solver::Ddim] {
        let base = run(&st, &RunConfig::new(solver, GuidanceMode::Baseline, 50, 9));
        let mut empty = RunConfig::new(solver, GuidanceMode::Safe, 50, 9);
        empty.gc.critical_steps = CriticalSteps::Empty;
        let mut zero = RunConfig::new(solver, GuidanceMode::Safe, 50, 9);
        zero.weight_scale = 0.0;
        let mut inf = RunConfig::new(solver, GuidanceMode::Safe, 50, 9);
        inf.gc.beta_threshold = BetaThreshold::Constant(f64::INFINITY);
        for rc in [empty, zero, inf] {
            assert_eq!(bits(&run(&st, &rc).samples), bits(&base.samples));
        }
        let open = run(&st, &RunConfig::new(solver, GuidanceMode::Safe, 50, 9));
        assert_ne!(bits(&open.samples), bits(&base.samples));
    }
}

#[test]
fn gate_audit() {
    let st = setup();
    let critical = CriticalSteps::range(60, 100);
    let mut counts = Vec::new();
    for th in [0.0, 1e-4, 1e-2, 0.05, 0.2, f64::INFINITY] {
        let mut rc = RunConfig::new(Solver::Ddpm, GuidanceMode::Safe, 40, 3);
        rc.gc.critical_steps = critical.clone();
        rc.gc.beta_threshold = BetaThreshold::Constant(th);
        rc.record_diagnostics = true;
        let r = run(&st, &rc);
        let mut open = 0;
        for per_sample in &r.diagnostics {
            assert_eq!(per_sample.len(), 41);
            for d in per_sample {
                assert!(critical.contains(d.step));
                assert_eq!(d.gate_open, d.beta > th);
                assert_eq!(d.applied_weight, if d.gate_open { d.beta } else { 0.0 });
                open += d.gate_open as usize;
            }
        }
        counts.push(open);
    }
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    assert_eq!(*counts.last().unwrap(), 0);
    assert!(counts[0] > 0);
}

#[test]
fn ddim_with_exact_gaussian_denoiser_is_injective() {
    let s = make_schedule(200, ScheduleParams::default()).unwrap();
    let gm = GaussianMixture::isotropic(vec![1.0], vec![dvector![0.3, 0.1]], &[0.7]).unwrap();
    let fields = FieldSet::new(exact_denoiser(&gm, &s).unwrap());
    let inits: Vec<Point> = (0..20).map(|i| dvector![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
    let mut rc = RunConfig::new(Solver::Ddim, GuidanceMode::Baseline, 20, 0);
    rc.init = Init::FixedPoints(inits.clone());
    let r = run_algorithm1(&rc, &s, &fields, None).unwrap();
    for i in 0..20 {
        for j in i + 1..20 {
            assert!((&r.samples[i] - &r.samples[j]).norm() > 0.0);
        }
    }
    let mut nudged = rc.clone();
    let mut moved = inits;
    moved[0][0] += 1e-9;
    nudged.init = Init::FixedPoints(moved);
    let r2 = run_algorithm1(&nudged, &s, &fields, None).unwrap();
    assert_ne!(r.samples[0], r2.samples[0]);
}

#[test]
fn trajectories_span_all_steps() {
    let st = setup();
    let mut rc = RunConfig::new(Solver::Ddim, GuidanceMode::Baseline, 3, 1);
    rc.record_trajectories = true;
    let r = run(&st, &rc);
    let tr = r.trajectories.unwrap();
    assert_eq!(tr.len(), 3);
    for (t, x) in tr.iter().zip(&r.samples) {
        assert_eq!(t.len(), st.s.steps() + 1);
        assert_eq!(t.last().unwrap(), x);
    }
    assert!(st.gm.dim() == 2);
}

fn moments(samples: &[Point]) -> (DVector<f64>, [f64; 3]) {
    let n = samples.len() as f64;
    let mean = samples.iter().fold(DVector::zeros(2), |a, x| a + x) / n;
    let mut c = [0.0; 3];
    for x in samples {
        let d = x - &mean;
        c[0] += d[0] * d[0];
        c[1] += d[0] * d[1];
        c[2] += d[1] * d[1];
    }
    (mean, c.map(|v| v / (n - 1.0)))
}

#[test]
fn gaussian_endpoint_statistics() {
    let s = make_schedule(1000, ScheduleParams::default()).unwrap();
    let m = dvector![0.5, -0.25];
    let gm = GaussianMixture::isotropic(vec![1.0], vec![m.clone()], &[1.0]).unwrap();
    let fields = FieldSet::new(exact_denoiser(&gm, &s).unwrap());
    let n = 10_000;
    for solver in [Solver::Ddim, Solver::Ddpm] {
        let r = run_algorithm1(&RunConfig::new(solver, GuidanceMode::Baseline, n, 17), &s, &fields, None).unwrap();
        let (mean, cov) = moments(&r.samples);
        let se = (1.0 / n as f64).sqrt();
        for i in 0..2 {
            assert!((mean[i] - m[i]).abs() <= 4.0 * se, "{solver:?} mean {mean}");
        }
        assert!((cov[0] - 1.0).abs() <= 0.05 && (cov[2] - 1.0).abs() <= 0.05 && cov[1].abs() <= 0.05, "{solver:?} {cov:?}");
    }
}
