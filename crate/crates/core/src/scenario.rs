//! Synthetic ground-truth scenarios and Gaussian realizations.
//!
//! Two families are supported. `Equal` powers: unit target and noise
//! variances with constant inter-frequency correlation. `RandomUniform`
//! powers: per-bin (and per-sensor, for noise) variances drawn from
//! `U(epsilon, 0.5)` with correlation `coef * sqrt(var_i var_j)`. Noise is
//! spatially white in both cases and is rescaled to the requested SNR; a
//! white sensor-noise floor is then added on top.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::{FrameBlock, SpectralSpatialCovariance};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, HermitianMatrix, C64};
use crate::model::{Layout, TransferFunction};

/// Reference-sensor ATF entries smaller than this are redrawn.
pub const MIN_REFERENCE_MODULUS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerProfile {
    Equal,
    RandomUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(alias = "M")]
    pub sensors: usize,
    #[serde(alias = "K")]
    pub bins: usize,
    #[serde(alias = "L")]
    pub frames: usize,
    pub snr_db: f64,
    pub rho_f: f64,
    pub upsilon_f: f64,
    pub powers: PowerProfile,
    pub epsilon: f64,
    pub sensor_noise_snr_db: f64,
    pub reference_sensor: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            sensors: 2,
            bins: 5,
            frames: 1000,
            snr_db: -5.0,
            rho_f: 0.25,
            upsilon_f: 0.25,
            powers: PowerProfile::Equal,
            epsilon: 0.01,
            sensor_noise_snr_db: 40.0,
            reference_sensor: 0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.sensors == 0 || self.bins == 0 {
            return bad(format!("need M >= 1 and K >= 1 (got M={}, K={})", self.sensors, self.bins));
        }
        if self.frames == 0 {
            return bad("L must be at least 1".into());
        }
        if self.reference_sensor >= self.sensors {
            return bad(format!(
                "reference sensor {} out of range for M={}",
                self.reference_sensor, self.sensors
            ));
        }
        for (name, v) in [("rho_f", self.rho_f), ("upsilon_f", self.upsilon_f)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1] (got {v})"));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return bad(format!("epsilon must lie in (0, 0.5) (got {})", self.epsilon));
        }
        if !self.snr_db.is_finite() || !self.sensor_noise_snr_db.is_finite() {
            return bad("SNR values must be finite".into());
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<Layout> {
        Layout::new(self.bins, self.sensors)
    }
}

/// Everything known about one synthetic configuration.
#[derive(Debug, Clone)]
pub struct ScenarioTruth {
    pub reference_sensor: usize,
    pub a: TransferFunction,
    /// `K x K` source spectral covariance.
    pub r_sbar: HermitianMatrix,
    /// `R_sbar ⊗ 1_{MxM}`.
    pub r_s: HermitianMatrix,
    /// Structured noise covariance before SNR scaling.
    pub r_v_unit: HermitianMatrix,
    pub r_v: SpectralSpatialCovariance,
    pub r_d: SpectralSpatialCovariance,
    pub r_x: SpectralSpatialCovariance,
    pub v2: f64,
    pub sensor_noise_var: f64,
}

impl ScenarioTruth {
    pub fn layout(&self) -> Layout {
        self.a.layout
    }
}

/// ChaCha8 generator for `(seed, stream)`; distinct streams are independent.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Circularly symmetric unit-variance complex Gaussian.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    // drawn column by column so that frame l only depends on earlier frames
    let mut m = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_normal(rng);
        }
    }
    m
}

/// Random ATF with real and imaginary parts uniform on `(-1, 1)`.
pub fn random_atf<R: Rng + ?Sized>(
    sensors: usize,
    bins: usize,
    reference_sensor: usize,
    rng: &mut R,
) -> Result<TransferFunction> {
    let layout = Layout::new(bins, sensors)?;
    if reference_sensor >= sensors {
        return Err(Error::InvalidArgument(format!(
            "reference sensor {reference_sensor} out of range for M={sensors}"
        )));
    }
    let mut values = Vec::with_capacity(layout.len());
    for _ in 0..bins {
        for m in 0..sensors {
            let mut z = uniform_complex(rng);
            while m == reference_sensor && z.norm() < MIN_REFERENCE_MODULUS {
                z = uniform_complex(rng);
            }
            values.push(z);
        }
    }
    TransferFunction::new(layout, values)
}

fn uniform_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re = rng.random_range(-1.0..1.0);
    let im = rng.random_range(-1.0..1.0);
    C64::new(re, im)
}

/// `V^2 = tr(R_d) / (tr(R_v_unit) 10^{snr/10})`.
pub fn scale_to_snr(r_d: &HermitianMatrix, r_v_unit: &HermitianMatrix, snr_db: f64) -> Result<f64> {
    let td = r_d.trace();
    let tv = r_v_unit.trace();
    if !(td > 0.0 && tv > 0.0) {
        return Err(Error::ScenarioInvalid {
            matrix: if td > 0.0 { "R_v" } else { "R_d" },
            reason: format!("trace must be positive (tr R_d = {td:.3e}, tr R_v = {tv:.3e})"),
        });
    }
    Ok(td / (tv * 10f64.powf(snr_db / 10.0)))
}

/// Unit-variance target and noise with constant inter-frequency correlation.
pub fn build_equicorrelated<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<ScenarioTruth> {
    cfg.validate()?;
    let (k, m) = (cfg.bins, cfg.sensors);
    let a = random_atf(m, k, cfg.reference_sensor, rng)?;
    let r_sbar = equicorrelation(k, cfg.rho_f, &vec![1.0; k]);
    let r_v_unit = noise_pattern(k, m, cfg.upsilon_f, &vec![1.0; k * m]);
    assemble(cfg, a, r_sbar, r_v_unit)
}

/// Random per-bin powers with geometric-mean-scaled correlations.
pub fn build_varcorrelated<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<ScenarioTruth> {
    cfg.validate()?;
    let (k, m) = (cfg.bins, cfg.sensors);
    let a = random_atf(m, k, cfg.reference_sensor, rng)?;
    let noise_var: Vec<f64> = (0..k * m).map(|_| rng.random_range(cfg.epsilon..0.5)).collect();
    let source_var: Vec<f64> = (0..k).map(|_| rng.random_range(cfg.epsilon..0.5)).collect();
    let r_sbar = equicorrelation(k, cfg.rho_f, &source_var);
    let r_v_unit = noise_pattern(k, m, cfg.upsilon_f, &noise_var);
    assemble(cfg, a, r_sbar, r_v_unit)
}

/// Builds the truth selected by `cfg.powers`, drawing from `rng`.
pub fn build_truth<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<ScenarioTruth> {
    match cfg.powers {
        PowerProfile::Equal => build_equicorrelated(cfg, rng),
        PowerProfile::RandomUniform => build_varcorrelated(cfg, rng),
    }
}

/// `[R]_{ij} = var_i` on the diagonal and `coef sqrt(var_i var_j)` elsewhere.
fn equicorrelation(k: usize, coef: f64, var: &[f64]) -> HermitianMatrix {
    HermitianMatrix::symmetrized(Mat::from_fn(k, k, |i, j| {
        let v = if i == j { var[i] } else { coef * (var[i] * var[j]).sqrt() };
        C64::new(v, 0.0)
    }))
}

/// Noise correlated across bins within a sensor, uncorrelated across sensors.
fn noise_pattern(k: usize, m: usize, coef: f64, var: &[f64]) -> HermitianMatrix {
    let n = k * m;
    HermitianMatrix::symmetrized(Mat::from_fn(n, n, |i, j| {
        let v = if i == j {
            var[i]
        } else if i % m == j % m {
            coef * (var[i] * var[j]).sqrt()
        } else {
            0.0
        };
        C64::new(v, 0.0)
    }))
}

fn assemble(
    cfg: &ScenarioConfig,
    a: TransferFunction,
    r_sbar: HermitianMatrix,
    r_v_unit: HermitianMatrix,
) -> Result<ScenarioTruth> {
    let layout = a.layout;
    check_psd("R_sbar", &r_sbar)?;
    check_psd("R_v", &r_v_unit)?;
    let ones = Mat::from_fn(layout.sensors, layout.sensors, |_, _| C64::new(1.0, 0.0));
    let r_s = HermitianMatrix::symmetrized(linalg::kron(r_sbar.as_ref(), ones.as_ref()));
    let r_d = desired_covariance(&a, &r_s);
    let v2 = scale_to_snr(&r_d, &r_v_unit, cfg.snr_db)?;
    let sensor_noise_var = r_d.trace() / layout.len() as f64 * 10f64.powf(-cfg.sensor_noise_snr_db / 10.0);
    let r_v = r_v_unit.scaled(v2).add_diagonal(sensor_noise_var);
    let r_x = r_d.try_add(&r_v)?;
    Ok(ScenarioTruth {
        reference_sensor: cfg.reference_sensor,
        a,
        r_sbar,
        r_s,
        r_v_unit,
        r_v: SpectralSpatialCovariance::new(layout, r_v)?,
        r_d: SpectralSpatialCovariance::new(layout, r_d)?,
        r_x: SpectralSpatialCovariance::new(layout, r_x)?,
        v2,
        sensor_noise_var,
    })
}

/// `A R_s A^H` with `A = diag(a)`.
pub fn desired_covariance(a: &TransferFunction, r_s: &HermitianMatrix) -> HermitianMatrix {
    let n = a.values.len();
    HermitianMatrix::symmetrized(Mat::from_fn(n, n, |i, j| {
        a.values[i] * r_s.get(i, j) * a.values[j].conj()
    }))
}

fn check_psd(name: &'static str, h: &HermitianMatrix) -> Result<()> {
    let ev = linalg::hermitian_eigenvalues(h)?;
    let max = ev.first().copied().unwrap_or(0.0);
    let min = ev.last().copied().unwrap_or(0.0);
    if min < -linalg::PSD_TOL * max.abs() {
        return Err(Error::ScenarioInvalid {
            matrix: name,
            reason: format!("not positive semidefinite (min eigenvalue {min:.3e})"),
        });
    }
    Ok(())
}

/// One batch of `L` independent draws.
#[derive(Debug, Clone)]
pub struct Realizations {
    /// `x(l) = d(l) + v(l)`.
    pub noisy: FrameBlock,
    /// `v(l)`, including the sensor-noise floor.
    pub noise: FrameBlock,
    /// `sbar(l)` as a `K x L` matrix (one column per frame).
    pub source: ComplexMatrix,
}

impl Realizations {
    /// Per-sensor-expanded source vectors `s(l) = sbar(l) ⊗ 1_M`, as a `KM x L` matrix.
    pub fn expanded_source(&self) -> ComplexMatrix {
        let m = self.noisy.layout().sensors;
        let s = &self.source;
        Mat::from_fn(s.nrows() * m, s.ncols(), |i, l| s[(i / m, l)])
    }
}

/// Precomputed square roots for repeated sampling from one truth.
#[derive(Debug, Clone)]
pub struct ScenarioSampler {
    layout: Layout,
    a: Vec<C64>,
    source_sqrt: ComplexMatrix,
    noise_sqrt: ComplexMatrix,
    sensor_noise_std: f64,
}

impl ScenarioSampler {
    pub fn new(truth: &ScenarioTruth) -> Result<Self> {
        let noise_sqrt = linalg::psd_sqrt(&truth.r_v_unit.scaled(truth.v2))?;
        Ok(Self {
            layout: truth.layout(),
            a: truth.a.values.clone(),
            source_sqrt: linalg::psd_sqrt(&truth.r_sbar)?,
            noise_sqrt,
            sensor_noise_std: truth.sensor_noise_var.sqrt(),
        })
    }

    /// Draws `frames` independent realizations of source, noise and mixture.
    pub fn sample<R: Rng + ?Sized>(&self, frames: usize, rng: &mut R) -> Result<Realizations> {
        let n = self.layout.len();
        let m = self.layout.sensors;
        let source = self.source_sqrt.as_ref() * complex_normal_matrix(self.layout.bins, frames, rng).as_ref();
        let mut noise = self.noise_sqrt.as_ref() * complex_normal_matrix(n, frames, rng).as_ref();
        let floor = complex_normal_matrix(n, frames, rng);
        for j in 0..frames {
            for i in 0..n {
                noise[(i, j)] += floor[(i, j)] * self.sensor_noise_std;
            }
        }
        let noisy = Mat::from_fn(n, frames, |i, l| self.a[i] * source[(i / m, l)] + noise[(i, l)]);
        Ok(Realizations {
            noisy: FrameBlock::new(self.layout, noisy, None)?,
            noise: FrameBlock::new(self.layout, noise, None)?,
            source,
        })
    }

    /// Noise-only draws (for estimating `R_v` from a separate segment).
    pub fn sample_noise<R: Rng + ?Sized>(&self, frames: usize, rng: &mut R) -> Result<FrameBlock> {
        let n = self.layout.len();
        let mut noise = self.noise_sqrt.as_ref() * complex_normal_matrix(n, frames, rng).as_ref();
        let floor = complex_normal_matrix(n, frames, rng);
        for j in 0..frames {
            for i in 0..n {
                noise[(i, j)] += floor[(i, j)] * self.sensor_noise_std;
            }
        }
        FrameBlock::new(self.layout, noise, None)
    }
}

/// Convenience wrapper around [`ScenarioSampler`].
pub fn sample_realizations<R: Rng + ?Sized>(
    truth: &ScenarioTruth,
    frames: usize,
    rng: &mut R,
) -> Result<Realizations> {
    ScenarioSampler::new(truth)?.sample(frames, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::sample_covariance;
    use crate::linalg::{frobenius_distance, hermitian_eigenvalues};
    use crate::metrics::snr_db;

    fn cfg(k: usize, m: usize) -> ScenarioConfig {
        ScenarioConfig {
            bins: k,
            sensors: m,
            ..Default::default()
        }
    }

    #[test]
    fn atf_is_in_range_and_reproducible() {
        let a = random_atf(3, 4, 0, &mut stream_rng(7, 0)).unwrap();
        let b = random_atf(3, 4, 0, &mut stream_rng(7, 0)).unwrap();
        let c = random_atf(3, 4, 0, &mut stream_rng(8, 0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.values.iter().all(|z| z.re.abs() < 1.0 && z.im.abs() < 1.0));
    }

    #[test]
    fn atf_mean_is_zero() {
        let a = random_atf(10, 10_000, 0, &mut stream_rng(1, 0)).unwrap();
        let n = a.values.len() as f64;
        let mean: C64 = a.values.iter().sum::<C64>() / n;
        // each part is U(-1,1): variance 1/3
        let sigma = (1.0f64 / 3.0 / n).sqrt();
        assert!(mean.re.abs() < 3.0 * sigma && mean.im.abs() < 3.0 * sigma);
    }

    #[test]
    fn equicorrelated_noise_pattern_matches_two_by_two_layout() {
        let c = ScenarioConfig {
            upsilon_f: 0.25,
            ..cfg(2, 2)
        };
        let t = build_equicorrelated(&c, &mut stream_rng(0, 0)).unwrap();
        #[rustfmt::skip]
        let expected = [
            1.0, 0.0, 0.25, 0.0,
            0.0, 1.0, 0.0, 0.25,
            0.25, 0.0, 1.0, 0.0,
            0.0, 0.25, 0.0, 1.0,
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(t.r_v_unit.get(i, j), C64::new(expected[i * 4 + j], 0.0));
            }
        }
    }

    #[test]
    fn zero_rho_gives_identity_source() {
        let c = ScenarioConfig { rho_f: 0.0, ..cfg(4, 2) };
        let t = build_equicorrelated(&c, &mut stream_rng(0, 0)).unwrap();
        let eye = HermitianMatrix::identity(4);
        assert_eq!(t.r_sbar.matrix(), eye.matrix());
    }

    #[test]
    fn high_rho_source_is_psd() {
        let c = ScenarioConfig { rho_f: 0.9, ..cfg(5, 2) };
        let t = build_equicorrelated(&c, &mut stream_rng(0, 0)).unwrap();
        assert!(hermitian_eigenvalues(&t.r_sbar).unwrap().iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn varcorrelated_structure() {
        let c = ScenarioConfig {
            powers: PowerProfile::RandomUniform,
            upsilon_f: 0.0,
            ..cfg(3, 2)
        };
        let t = build_varcorrelated(&c, &mut stream_rng(3, 0)).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert_eq!(t.r_v.matrix().get(i, j), C64::new(0.0, 0.0));
                }
            }
        }
        let c = ScenarioConfig { upsilon_f: 0.7, ..c };
        let t = build_varcorrelated(&c, &mut stream_rng(3, 0)).unwrap();
        let rv = t.r_v.matrix();
        for i in 0..6 {
            for j in 0..6 {
                if i % 2 != j % 2 {
                    assert_eq!(rv.get(i, j), C64::new(0.0, 0.0));
                }
                assert!(rv.get(i, j).norm_sqr() <= rv.get(i, i).re * rv.get(j, j).re * (1.0 + 1e-12));
            }
        }
        for k in 0..3 {
            let var = t.r_sbar.get(k, k).re;
            assert!((0.01..0.5).contains(&var));
        }
    }

    #[test]
    fn scale_to_snr_examples() {
        let d = |x: f64| HermitianMatrix::from_real_diagonal(&[x]);
        assert!((scale_to_snr(&d(10.0), &d(1.0), 10.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((scale_to_snr(&d(3.0), &d(3.0), 0.0).unwrap() - 1.0).abs() < 1e-15);
        let v2 = scale_to_snr(&d(4.0), &d(1.0), -5.0).unwrap();
        assert!((v2 - 4.0 * 10f64.powf(0.5)).abs() < 1e-12);
        assert!((v2 - 12.6491).abs() < 1e-4);
        assert!(matches!(
            scale_to_snr(&d(0.0), &d(1.0), 0.0),
            Err(Error::ScenarioInvalid { .. })
        ));
    }

    #[test]
    fn structured_snr_round_trip() {
        let c = ScenarioConfig { snr_db: -7.5, powers: PowerProfile::RandomUniform, ..cfg(4, 3) };
        let t = build_truth(&c, &mut stream_rng(11, 0)).unwrap();
        let rv = t.r_v_unit.scaled(t.v2);
        assert!((snr_db(t.r_d.matrix(), &rv).unwrap() + 7.5).abs() < 1e-12);
    }

    #[test]
    fn truth_invariants_hold() {
        for (seed, powers) in [(1, PowerProfile::Equal), (2, PowerProfile::RandomUniform)] {
            let c = ScenarioConfig { powers, rho_f: 0.6, ..cfg(4, 3) };
            let t = build_truth(&c, &mut stream_rng(seed, 0)).unwrap();
            let sum = t.r_d.matrix().try_add(t.r_v.matrix()).unwrap();
            assert!(frobenius_distance(sum.as_ref(), t.r_x.matrix().as_ref()) <= 1e-12 * sum.frobenius_norm());
            let ev = hermitian_eigenvalues(t.r_d.matrix()).unwrap();
            assert!(ev[4] <= 1e-10 * ev[0]);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let c = ScenarioConfig { rho_f: 1.5, ..cfg(2, 2) };
        assert!(build_truth(&c, &mut stream_rng(0, 0)).is_err());
        let c = ScenarioConfig { reference_sensor: 2, ..cfg(2, 2) };
        assert!(build_truth(&c, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn absent_target_leaves_noise_only() {
        let c = cfg(2, 2);
        let mut t = build_truth(&c, &mut stream_rng(0, 0)).unwrap();
        t.r_sbar = HermitianMatrix::zeros(2);
        let r = sample_realizations(&t, 50, &mut stream_rng(0, 1)).unwrap();
        let diff = r.noisy.try_sub(&r.noise).unwrap();
        let cov = sample_covariance(&diff).unwrap();
        assert!(cov.matrix().frobenius_norm() < 1e-24);
    }

    #[test]
    fn scalar_variance_converges() {
        let c = ScenarioConfig { snr_db: 0.0, ..cfg(1, 1) };
        let t = build_truth(&c, &mut stream_rng(5, 0)).unwrap();
        let r = sample_realizations(&t, 100_000, &mut stream_rng(5, 1)).unwrap();
        let var = sample_covariance(&r.noisy).unwrap().matrix().get(0, 0).re;
        let expected = t.r_x.matrix().get(0, 0).re;
        assert!((var / expected - 1.0).abs() < 0.02);
    }

    #[test]
    fn empirical_covariance_converges() {
        let c = ScenarioConfig { powers: PowerProfile::RandomUniform, rho_f: 0.5, snr_db: 0.0, ..cfg(3, 2) };
        let t = build_truth(&c, &mut stream_rng(9, 0)).unwrap();
        let r = sample_realizations(&t, 100_000, &mut stream_rng(9, 1)).unwrap();
        let est = sample_covariance(&r.noisy).unwrap();
        let err = frobenius_distance(est.matrix().as_ref(), t.r_x.matrix().as_ref());
        assert!(err < 0.03 * t.r_x.matrix().frobenius_norm());
    }

    #[test]
    fn sampling_is_deterministic() {
        let t = build_truth(&cfg(3, 2), &mut stream_rng(4, 0)).unwrap();
        let a = sample_realizations(&t, 20, &mut stream_rng(4, 9)).unwrap();
        let b = sample_realizations(&t, 20, &mut stream_rng(4, 9)).unwrap();
        assert_eq!(a.noisy.frames(), b.noisy.frames());
        assert_eq!(a.noise.frames(), b.noise.frames());
    }
}
