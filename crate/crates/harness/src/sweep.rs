//! Monte-Carlo sweeps over one scenario parameter.
//!
//! The truth (transfer function and covariances) is drawn once per sweep
//! from stream 0 of the base seed, so every sweep point shares the same
//! target transfer function; only the `L` realizations are redrawn per
//! trial. Trial `t` at point `i` uses stream `((i + 1) << 32) | t`.

use rayon::prelude::*;
use wbrtf_core::covariance::sample_covariance;
use wbrtf_core::crb::{conditional_crb, unconditional_crb};
use wbrtf_core::metrics::{confidence_interval_95, crb_db, hermitian_angle, rmse_db};
use wbrtf_core::rtf::normalize_rtf;
use wbrtf_core::scenario::{build_truth, stream_rng, ScenarioConfig, ScenarioSampler, ScenarioTruth};
use wbrtf_core::speech::{run_speech_experiment, SpeechInputs};

use crate::config::{point_error, ScenarioKind, SweepSpec};
use crate::HarnessError;

pub const METRIC_RMSE: &str = "rmse_db";
pub const METRIC_ANGLE: &str = "hermitian_angle";
pub const BOUND_CONDITIONAL: &str = "crb-conditional";
pub const BOUND_UNCONDITIONAL: &str = "crb-unconditional";

/// One aggregated CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub swept_parameter: String,
    pub value: f64,
    /// Estimator name, or bound name for bound rows.
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_trials: usize,
    pub seed: u64,
}

pub fn trial_stream(point: usize, trial: usize) -> u64 {
    ((point as u64 + 1) << 32) | trial as u64
}

/// Stream for the source draw behind the conditional bound.
pub fn bound_stream(point: usize) -> u64 {
    ((point as u64 + 1) << 32) | u32::MAX as u64
}

struct Point {
    cfg: ScenarioConfig,
    truth: ScenarioTruth,
    sampler: ScenarioSampler,
}

fn build_point(spec: &SweepSpec, i: usize) -> Result<Point, HarnessError> {
    let cfg = spec.scenario_config(i)?;
    let truth = build_truth(&cfg, &mut stream_rng(spec.base_seed, 0)).map_err(|e| point_error(spec, i, e))?;
    let sampler = ScenarioSampler::new(&truth).map_err(|e| point_error(spec, i, e))?;
    Ok(Point { cfg, truth, sampler })
}

fn require_synthetic(spec: &SweepSpec) -> Result<(), HarnessError> {
    if spec.scenario == ScenarioKind::Speech {
        return Err(HarnessError::Config(
            "speech scenarios need audio inputs (use the speech subcommand)".into(),
        ));
    }
    Ok(())
}

/// `(rmse_db, hermitian_angle)` per method for one trial.
fn run_trial(spec: &SweepSpec, p: &Point, point: usize, trial: usize) -> wbrtf_core::Result<Vec<(f64, f64)>> {
    let mut rng = stream_rng(spec.base_seed, trial_stream(point, trial));
    let r = p.cfg.reference_sensor;
    let draws = p.sampler.sample(p.cfg.frames, &mut rng)?;
    let rx = sample_covariance(&draws.noisy)?;
    let rv = if spec.estimate_noise_covariance {
        sample_covariance(&p.sampler.sample_noise(p.cfg.frames, &mut rng)?)?
    } else {
        p.truth.r_v.clone()
    };
    let truth = normalize_rtf(&p.truth.a, r)?;
    spec.methods
        .iter()
        .map(|m| {
            let est = m.estimate(&rx, &rv, r)?;
            Ok((rmse_db(&est, &truth)?, hermitian_angle(&est, &truth)?))
        })
        .collect()
}

fn summarize(samples: &[f64]) -> (f64, f64, f64) {
    match confidence_interval_95(samples) {
        Ok(ci) => (ci.mean, ci.lo, ci.hi),
        Err(_) => (samples[0], samples[0], samples[0]),
    }
}

fn row(spec: &SweepSpec, i: usize, method: &str, metric: &str, stats: (f64, f64, f64), n: usize) -> ResultRow {
    ResultRow {
        scenario: spec.scenario.name().to_string(),
        swept_parameter: spec.swept_parameter.name().to_string(),
        value: spec.values[i],
        method: method.to_string(),
        metric: metric.to_string(),
        mean: stats.0,
        ci_lo: stats.1,
        ci_hi: stats.2,
        n_trials: n,
        seed: spec.base_seed,
    }
}

fn method_rows(spec: &SweepSpec, i: usize, per_trial: &[Vec<(f64, f64)>], out: &mut Vec<ResultRow>) {
    for (j, m) in spec.methods.iter().enumerate() {
        let rmse: Vec<f64> = per_trial.iter().map(|t| t[j].0).collect();
        let angle: Vec<f64> = per_trial.iter().map(|t| t[j].1).collect();
        out.push(row(spec, i, m.name(), METRIC_RMSE, summarize(&rmse), rmse.len()));
        out.push(row(spec, i, m.name(), METRIC_ANGLE, summarize(&angle), angle.len()));
    }
}

/// Conditional and unconditional bounds in dB at the true parameters.
fn bound_rows(spec: &SweepSpec, i: usize, p: &Point) -> Result<Vec<ResultRow>, HarnessError> {
    let r = p.cfg.reference_sensor;
    let rv = p.truth.r_v.matrix();
    let unconditional = unconditional_crb(&p.truth.a, &p.truth.r_s, rv, p.cfg.frames, r)
        .map_err(|e| point_error(spec, i, e))?;
    let mut rng = stream_rng(spec.base_seed, bound_stream(i));
    let draws = p.sampler.sample(p.cfg.frames, &mut rng).map_err(|e| point_error(spec, i, e))?;
    let conditional = conditional_crb(&draws.expanded_source(), rv, &p.truth.a, r).map_err(|e| point_error(spec, i, e))?;
    let c = crb_db(&conditional.bounds);
    let u = crb_db(&unconditional.bounds);
    Ok(vec![
        row(spec, i, BOUND_CONDITIONAL, METRIC_RMSE, (c, c, c), 1),
        row(spec, i, BOUND_UNCONDITIONAL, METRIC_RMSE, (u, u, u), 1),
    ])
}

/// Runs every (point, trial) pair in parallel; rows come out grouped by
/// point in the order of `values`, then by method, then metric, followed by
/// bound rows when requested.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<ResultRow>, HarnessError> {
    spec.validate()?;
    require_synthetic(spec)?;
    let points = (0..spec.values.len())
        .map(|i| build_point(spec, i))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| (0..spec.n_trials).map(move |t| (i, t)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, t)| run_trial(spec, &points[i], i, t).map_err(|e| point_error(spec, i, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let per_trial = &results[i * spec.n_trials..(i + 1) * spec.n_trials];
        method_rows(spec, i, per_trial, &mut rows);
        if spec.compute_bounds {
            rows.extend(bound_rows(spec, i, p)?);
        }
    }
    Ok(rows)
}

/// Bound rows only, for every sweep point.
pub fn run_crb(spec: &SweepSpec) -> Result<Vec<ResultRow>, HarnessError> {
    spec.validate()?;
    require_synthetic(spec)?;
    let per_point = (0..spec.values.len())
        .into_par_iter()
        .map(|i| bound_rows(spec, i, &build_point(spec, i)?))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// Speech experiment at each sweep point; repetitions play the role of
/// trials and all points share the base seed.
pub fn run_speech_sweep(spec: &SweepSpec, inputs: &SpeechInputs) -> Result<Vec<ResultRow>, HarnessError> {
    spec.validate()?;
    if spec.scenario != ScenarioKind::Speech {
        return Err(HarnessError::Config(format!(
            "scenario {} is synthetic (use the synthetic subcommand)",
            spec.scenario.name()
        )));
    }
    let mut rows = Vec::new();
    for i in 0..spec.values.len() {
        let cfg = spec.speech_config(i)?;
        let trials = run_speech_experiment(inputs, &cfg, &spec.methods).map_err(|e| point_error(spec, i, e))?;
        let per_trial: Vec<Vec<(f64, f64)>> = trials
            .chunks(spec.methods.len())
            .map(|c| c.iter().map(|t| (t.rmse_db, t.hermitian_angle)).collect())
            .collect();
        method_rows(spec, i, &per_trial, &mut rows);
    }
    Ok(rows)
}

/// Convenience lookup used by tests and the acceptance suite.
pub fn find<'a>(rows: &'a [ResultRow], value: f64, method: &str, metric: &str) -> Option<&'a ResultRow> {
    rows.iter()
        .find(|r| r.value == value && r.method == method && r.metric == metric)
}
