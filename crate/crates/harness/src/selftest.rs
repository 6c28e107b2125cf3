//! Invariant checks on random configurations. The `selftest` subcommand
//! runs them at small sizes; the acceptance suite runs them at full size.

use faer::Mat;
use rand::Rng;
use wbrtf_core::covariance::{phase_adjusted_covariance, sample_covariance, FrameBlock, FrameMeta};
use wbrtf_core::crb::{conditional_crb, rtf_jacobian, unconditional_crb};
use wbrtf_core::linalg::{frobenius_distance, frobenius_norm, hermitian_eigenvalues, ComplexMatrix, HermitianMatrix, C64};
use wbrtf_core::metrics::hermitian_angle;
use wbrtf_core::model::Layout;
use wbrtf_core::rtf::{covariance_whitening, normalize_rtf, svd_direct};
use wbrtf_core::scenario::{build_truth, complex_normal, stream_rng, PowerProfile, ScenarioConfig, ScenarioSampler, ScenarioTruth};

/// Outcome of one check, with the measured figure and its limit in `detail`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn failed(name: &'static str, e: impl std::fmt::Display) -> Check {
    check(name, false, format!("error: {e}"))
}

/// Random configuration with `M ∈ {2,3,4}`, `K ∈ {2..6}` and random
/// correlations, SNR and reference sensor.
pub fn random_config<R: Rng + ?Sized>(rng: &mut R, powers: PowerProfile) -> ScenarioConfig {
    let sensors = rng.random_range(2..=4);
    ScenarioConfig {
        sensors,
        bins: rng.random_range(2..=6),
        rho_f: rng.random_range(0.0..0.95),
        upsilon_f: rng.random_range(0.0..0.95),
        snr_db: rng.random_range(-10.0..10.0),
        powers,
        reference_sensor: rng.random_range(0..sensors),
        ..ScenarioConfig::default()
    }
}

fn random_truth(seed: u64, i: u64, powers: PowerProfile) -> wbrtf_core::Result<(ScenarioConfig, ScenarioTruth)> {
    let mut rng = stream_rng(seed, i);
    let cfg = random_config(&mut rng, powers);
    let truth = build_truth(&cfg, &mut rng)?;
    Ok((cfg, truth))
}

/// Eigenvalue `K+1` of the exact target covariance relative to the largest.
pub fn rank_bound(n: usize, seed: u64) -> Check {
    const NAME: &str = "rank bound of target covariance";
    let mut worst = 0.0f64;
    for i in 0..n as u64 {
        let (cfg, t) = match random_truth(seed, i, PowerProfile::RandomUniform) {
            Ok(v) => v,
            Err(e) => return failed(NAME, e),
        };
        let ev = match hermitian_eigenvalues(t.r_d.matrix()) {
            Ok(v) => v,
            Err(e) => return failed(NAME, e),
        };
        worst = worst.max(ev[cfg.bins].abs() / ev[0]);
    }
    check(NAME, worst <= 1e-10, format!("{n} truths, max λ_(K+1)/λ_1 = {worst:.2e} (limit 1e-10)"))
}

/// Both estimators on exact covariances.
pub fn exact_recovery(n: usize, seed: u64) -> Check {
    const NAME: &str = "exact recovery from true covariances";
    let mut worst = 0.0f64;
    for i in 0..n as u64 {
        let powers = if i % 2 == 0 { PowerProfile::Equal } else { PowerProfile::RandomUniform };
        let res = random_truth(seed, i, powers).and_then(|(cfg, t)| {
            let r = cfg.reference_sensor;
            let truth = normalize_rtf(&t.a, r)?;
            let a = hermitian_angle(&svd_direct(&t.r_x, &t.r_v, r)?, &truth)?;
            let b = hermitian_angle(&covariance_whitening(&t.r_x, &t.r_v, r)?, &truth)?;
            Ok(a.max(b))
        });
        match res {
            Ok(v) => worst = worst.max(v),
            Err(e) => return failed(NAME, e),
        }
    }
    check(NAME, worst < 1e-7, format!("{n} configs, max Hermitian angle = {worst:.2e} rad (limit 1e-7)"))
}

/// Conditional bound below the unconditional one, zeros at the reference.
///
/// The ordering is guaranteed when both bounds see the same source
/// covariance, so the unconditional bound is evaluated at the realized
/// `S S^H / L` of the drawn frames. The gap to the bound at the population
/// `R_s` is reported alongside; it can go either way for small `L`.
pub fn bound_ordering(n: usize, seed: u64) -> Check {
    const NAME: &str = "conditional <= unconditional bound";
    let mut worst = f64::NEG_INFINITY;
    let mut worst_population = f64::NEG_INFINITY;
    let mut zeros = true;
    for i in 0..n as u64 {
        let res = random_truth(seed, i, PowerProfile::RandomUniform).and_then(|(cfg, t)| {
            let mut rng = stream_rng(seed, 1 << 40 | i);
            let frames = rng.random_range(50..=500);
            let r = cfg.reference_sensor;
            let draws = ScenarioSampler::new(&t)?.sample(frames, &mut rng)?;
            let s = draws.expanded_source();
            let gram = s.as_ref() * s.adjoint();
            let realized = HermitianMatrix::from_fn(s.nrows(), |p, q| gram[(p, q)] / frames as f64)?;
            let c = conditional_crb(&s, t.r_v.matrix(), &t.a, r)?;
            let u = unconditional_crb(&t.a, &realized, t.r_v.matrix(), frames, r)?;
            let up = unconditional_crb(&t.a, &t.r_s, t.r_v.matrix(), frames, r)?;
            Ok((t.layout(), r, c.bounds, u.bounds, up.bounds))
        });
        let (layout, r, c, u, up) = match res {
            Ok(v) => v,
            Err(e) => return failed(NAME, e),
        };
        for k in 0..layout.bins {
            let idx = layout.index(k, r);
            zeros &= c[idx] == 0.0 && u[idx] == 0.0 && up[idx] == 0.0;
        }
        let scale = u.iter().copied().fold(0.0, f64::max);
        for ((cb, ub), pb) in c.iter().zip(&u).zip(&up) {
            worst = worst.max((cb - ub) / scale);
            if *pb > 0.0 {
                worst_population = worst_population.max((cb - pb) / pb);
            }
        }
    }
    check(
        NAME,
        worst <= 1e-10 && zeros,
        format!(
            "{n} configs, max (cond - uncond)/max(uncond) = {worst:.2e} (slack 1e-10), \
             reference entries zero: {zeros}; vs population R_s: max relative excess {worst_population:.2e}"
        ),
    )
}

/// Analytic RTF Jacobian against central differences along real and
/// imaginary directions.
pub fn jacobian(n: usize, seed: u64) -> Check {
    const NAME: &str = "RTF Jacobian vs finite differences";
    let mut worst = 0.0f64;
    for i in 0..n as u64 {
        let res = random_truth(seed, i, PowerProfile::RandomUniform).and_then(|(cfg, t)| {
            let r = cfg.reference_sensor;
            let j = rtf_jacobian(&t.a, r)?;
            let mut err = 0.0f64;
            for imag in [false, true] {
                let fd = finite_difference_jacobian(&t.a, r, 1e-6, imag)?;
                err = err.max(frobenius_distance(j.as_ref(), fd.as_ref()) / frobenius_norm(j.as_ref()));
            }
            Ok(err)
        });
        match res {
            Ok(v) => worst = worst.max(v),
            Err(e) => return failed(NAME, e),
        }
    }
    check(NAME, worst <= 1e-6, format!("{n} random a, max relative error = {worst:.2e} (limit 1e-6)"))
}

fn finite_difference_jacobian(
    a: &wbrtf_core::model::TransferFunction,
    r: usize,
    h: f64,
    imag: bool,
) -> wbrtf_core::Result<ComplexMatrix> {
    let n = a.layout.len();
    let step = if imag { C64::new(0.0, h) } else { C64::new(h, 0.0) };
    let mut out = Mat::<C64>::zeros(n, n);
    for j in 0..n {
        let (mut plus, mut minus) = (a.clone(), a.clone());
        plus.values[j] += step;
        minus.values[j] -= step;
        let (gp, gm) = (normalize_rtf(&plus, r)?, normalize_rtf(&minus, r)?);
        for i in 0..n {
            let d = (gp.values[i] - gm.values[i]) / (2.0 * h);
            // the map is holomorphic, so the derivative along j equals j J
            out[(i, j)] = if imag { d * C64::new(0.0, -1.0) } else { d };
        }
    }
    Ok(out)
}

/// Diagonal blocks of the phase-adjusted estimator equal the plain ones.
pub fn phase_adjusted_diagonal(seed: u64) -> Check {
    const NAME: &str = "phase-adjusted diagonal blocks";
    let mut rng = stream_rng(seed, 7);
    let layout = match Layout::new(6, 3) {
        Ok(l) => l,
        Err(e) => return failed(NAME, e),
    };
    let frames = Mat::from_fn(layout.len(), 40, |_, _| complex_normal(&mut rng));
    let meta = FrameMeta {
        block_shift: 256,
        fft_size: 1024,
        bin_indices: vec![6, 9, 17, 100, 255, 256],
    };
    let res = FrameBlock::new(layout, frames, Some(meta)).and_then(|x| {
        let a = phase_adjusted_covariance(&x)?;
        let p = sample_covariance(&x)?;
        let mut worst = 0.0f64;
        for k in 0..layout.bins {
            let (da, dp) = (a.diagonal_block(k), p.diagonal_block(k));
            let d = frobenius_distance(da.as_ref(), dp.as_ref()) / dp.frobenius_norm();
            worst = worst.max(d);
        }
        Ok(worst)
    });
    match res {
        Ok(w) => check(NAME, w <= 1e-14, format!("max relative deviation = {w:.2e} (limit 1e-14)")),
        Err(e) => failed(NAME, e),
    }
}

/// Quick suite for the `selftest` subcommand.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        rank_bound(20, seed),
        exact_recovery(10, seed),
        bound_ordering(5, seed),
        jacobian(5, seed),
        phase_adjusted_diagonal(seed),
    ]
}
