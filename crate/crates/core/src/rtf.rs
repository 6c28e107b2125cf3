//! RTF estimators: wideband SVD-direct and narrowband covariance whitening.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::covariance::{self, estimate_target_covariance, SpectralSpatialCovariance};
use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::model::{Layout, TransferFunction};

/// Row blocks below this fraction of `||R_d||_F` are treated as empty.
pub const ZERO_BLOCK_TOL: f64 = 1e-12;

/// Principal generalized eigenvalues at or below `1 + LOW_CONFIDENCE_MARGIN`
/// indicate no target energy above the noise.
pub const LOW_CONFIDENCE_MARGIN: f64 = 1e-6;

/// Reference entries below this fraction of the bin's norm are degenerate.
pub const DEGENERATE_REFERENCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinStatus {
    Ok,
    /// The target covariance vanished in this bin; the RTF is set to ones.
    Undetermined,
    /// No generalized eigenvalue exceeds one; the direction is noise-driven.
    LowConfidence,
}

/// Estimator selector. The `OrigPhase` variants run on covariances from the
/// plain sample estimator instead of the phase-adjusted one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SvdDirect,
    Cw,
    SvdDirectOrigPhase,
    CwOrigPhase,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::SvdDirect,
        Method::Cw,
        Method::SvdDirectOrigPhase,
        Method::CwOrigPhase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SvdDirect => "svd-direct",
            Method::Cw => "cw",
            Method::SvdDirectOrigPhase => "svd-direct-orig-phase",
            Method::CwOrigPhase => "cw-orig-phase",
        }
    }

    pub fn uses_phase_adjustment(self) -> bool {
        matches!(self, Method::SvdDirect | Method::Cw)
    }

    pub fn is_wideband(self) -> bool {
        matches!(self, Method::SvdDirect | Method::SvdDirectOrigPhase)
    }

    /// Runs the estimator on the given covariance pair.
    pub fn estimate(
        self,
        rx: &SpectralSpatialCovariance,
        rv: &SpectralSpatialCovariance,
        reference_sensor: usize,
    ) -> Result<Rtf> {
        if self.is_wideband() {
            svd_direct(rx, rv, reference_sensor)
        } else {
            covariance_whitening(rx, rv, reference_sensor)
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Relative transfer function; entries at the reference sensor are exactly one.
#[derive(Debug, Clone, PartialEq)]
pub struct Rtf {
    pub layout: Layout,
    pub reference_sensor: usize,
    pub values: Vec<C64>,
    pub status: Vec<BinStatus>,
}

impl Rtf {
    pub fn ones(layout: Layout, reference_sensor: usize) -> Self {
        Self {
            layout,
            reference_sensor,
            values: vec![C64::new(1.0, 0.0); layout.len()],
            status: vec![BinStatus::Ok; layout.bins],
        }
    }

    pub fn bin(&self, k: usize) -> &[C64] {
        &self.values[self.layout.bin_range(k)]
    }

    pub fn get(&self, k: usize, m: usize) -> C64 {
        self.values[self.layout.index(k, m)]
    }

    pub fn is_flagged(&self, k: usize) -> bool {
        self.status[k] != BinStatus::Ok
    }

    pub fn select_bins(&self, bins: &[usize]) -> Result<Self> {
        let layout = Layout::new(bins.len(), self.layout.sensors)?;
        let mut values = Vec::with_capacity(layout.len());
        let mut status = Vec::with_capacity(bins.len());
        for &k in bins {
            values.extend_from_slice(self.bin(k));
            status.push(self.status[k]);
        }
        Ok(Self {
            layout,
            reference_sensor: self.reference_sensor,
            values,
            status,
        })
    }
}

/// Divides each bin by its reference entry.
pub fn normalize_rtf(a: &TransferFunction, reference_sensor: usize) -> Result<Rtf> {
    let layout = a.layout;
    check_reference(layout, reference_sensor)?;
    let mut out = Rtf::ones(layout, reference_sensor);
    for k in 0..layout.bins {
        normalize_bin(a.bin(k), reference_sensor, k, &mut out.values[layout.bin_range(k)])?;
    }
    Ok(out)
}

fn normalize_bin(v: &[C64], r: usize, bin: usize, out: &mut [C64]) -> Result<()> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let pivot = v[r];
    if !(pivot.norm() > DEGENERATE_REFERENCE_TOL * norm) {
        return Err(Error::DegenerateReference { bin });
    }
    for (o, z) in out.iter_mut().zip(v) {
        *o = *z / pivot;
    }
    out[r] = C64::new(1.0, 0.0);
    Ok(())
}

fn check_reference(layout: Layout, r: usize) -> Result<()> {
    if r >= layout.sensors {
        return Err(Error::InvalidArgument(format!(
            "reference sensor {r} out of range for M={}",
            layout.sensors
        )));
    }
    Ok(())
}

fn check_pair(rx: &SpectralSpatialCovariance, rv: &SpectralSpatialCovariance) -> Result<Layout> {
    let layout = rx.layout();
    if rv.layout() != layout {
        return Err(Error::DimensionMismatch {
            expected: layout.len(),
            got: rv.layout().len(),
        });
    }
    Ok(layout)
}

/// Wideband SVD-direct estimator.
///
/// Recovers the rank-`K` target covariance, then takes the principal left
/// singular vector of each `M x KM` row block. In exact arithmetic every
/// row block equals `a_k c_k^H` for some vector `c_k`, so that singular
/// vector is `a_k` up to scale.
pub fn svd_direct(
    rx: &SpectralSpatialCovariance,
    rv: &SpectralSpatialCovariance,
    reference_sensor: usize,
) -> Result<Rtf> {
    let layout = check_pair(rx, rv)?;
    check_reference(layout, reference_sensor)?;
    let rd = estimate_target_covariance(rx, rv, layout.bins)?;
    svd_direct_from_target(&rd, reference_sensor)
}

/// SVD-direct on an already recovered target covariance.
pub fn svd_direct_from_target(rd: &SpectralSpatialCovariance, reference_sensor: usize) -> Result<Rtf> {
    let layout = rd.layout();
    check_reference(layout, reference_sensor)?;
    let mut out = Rtf::ones(layout, reference_sensor);
    if layout.sensors == 1 {
        return Ok(out);
    }
    let total = rd.matrix().frobenius_norm();
    for k in 0..layout.bins {
        let block = rd.row_block(k);
        if !(linalg::frobenius_norm(block.as_ref()) >= ZERO_BLOCK_TOL * total) || total == 0.0 {
            out.status[k] = BinStatus::Undetermined;
            continue;
        }
        let s = linalg::svd(block.as_ref())?;
        let p: Vec<C64> = (0..layout.sensors).map(|m| s.u[(m, 0)]).collect();
        normalize_bin(&p, reference_sensor, k, &mut out.values[layout.bin_range(k)])?;
    }
    Ok(out)
}

/// Narrowband covariance whitening, independently per bin.
///
/// On the diagonal blocks `(R_x(k,k), R_v(k,k))` the principal generalized
/// eigenvector `u1` gives `a_k ∝ R_v(k,k) u1`.
pub fn covariance_whitening(
    rx: &SpectralSpatialCovariance,
    rv: &SpectralSpatialCovariance,
    reference_sensor: usize,
) -> Result<Rtf> {
    let layout = check_pair(rx, rv)?;
    check_reference(layout, reference_sensor)?;
    let mut out = Rtf::ones(layout, reference_sensor);
    if layout.sensors == 1 {
        return Ok(out);
    }
    for k in 0..layout.bins {
        let g = linalg::gevd_hpsd(&rx.diagonal_block(k), &rv.diagonal_block(k))
            .map_err(covariance::noise_error)?;
        let p: Vec<C64> = (0..layout.sensors).map(|m| g.left[(m, 0)]).collect();
        let low = g.values[0] <= 1.0 + LOW_CONFIDENCE_MARGIN;
        match normalize_bin(&p, reference_sensor, k, &mut out.values[layout.bin_range(k)]) {
            Ok(()) => {}
            // a noise-only pencil has no preferred direction; keep ones
            Err(Error::DegenerateReference { .. }) if low => {}
            Err(e) => return Err(e),
        }
        if low {
            out.status[k] = BinStatus::LowConfidence;
        }
    }
    Ok(out)
}

/// Applies a sensor permutation to every bin: entry `m` of the output is
/// entry `perm[m]` of the input.
pub fn permute_sensors(values: &[C64], layout: Layout, perm: &[usize]) -> Vec<C64> {
    let m = layout.sensors;
    (0..layout.len())
        .map(|i| values[(i / m) * m + perm[i % m]])
        .collect()
}

/// Same permutation applied to rows and columns of a stacked covariance.
pub fn permute_covariance(
    r: &SpectralSpatialCovariance,
    perm: &[usize],
) -> Result<SpectralSpatialCovariance> {
    let layout = r.layout();
    let m = layout.sensors;
    let src = |i: usize| (i / m) * m + perm[i % m];
    let mat = Mat::from_fn(layout.len(), layout.len(), |i, j| r.matrix().get(src(i), src(j)));
    SpectralSpatialCovariance::new(layout, linalg::HermitianMatrix::symmetrized(mat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::HermitianMatrix;
    use crate::metrics::hermitian_angle;
    use crate::scenario::{build_truth, desired_covariance, stream_rng, PowerProfile, ScenarioConfig};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn tf(k: usize, m: usize, v: Vec<C64>) -> TransferFunction {
        TransferFunction::new(Layout::new(k, m).unwrap(), v).unwrap()
    }

    fn cov(layout: Layout, h: HermitianMatrix) -> SpectralSpatialCovariance {
        SpectralSpatialCovariance::new(layout, h).unwrap()
    }

    fn assert_close(a: &Rtf, b: &Rtf, tol: f64) {
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).norm() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn normalize_examples() {
        let a = tf(1, 2, vec![c(2.0, 0.0), c(0.0, 4.0)]);
        let r = normalize_rtf(&a, 0).unwrap();
        assert_eq!(r.values, vec![c(1.0, 0.0), c(0.0, 2.0)]);
        let again = normalize_rtf(&tf(1, 2, r.values.clone()), 0).unwrap();
        assert_eq!(again.values, r.values);
        let scaled = tf(1, 2, vec![c(2.0, 0.0) * c(0.3, -2.0), c(0.0, 4.0) * c(0.3, -2.0)]);
        assert_close(&normalize_rtf(&scaled, 0).unwrap(), &r, 1e-15);
    }

    #[test]
    fn normalize_rejects_vanishing_reference() {
        let a = tf(2, 2, vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(normalize_rtf(&a, 0), Err(Error::DegenerateReference { bin: 1 })));
    }

    /// Row-block rank-one structure for K = 2, M = 2 built entry by entry.
    fn two_bin_target(a: &TransferFunction, s1: f64, s2: f64, s12: C64) -> HermitianMatrix {
        let rsbar = [[c(s1, 0.0), s12], [s12.conj(), c(s2, 0.0)]];
        HermitianMatrix::from_fn(4, |i, j| a.values[i] * rsbar[i / 2][j / 2] * a.values[j].conj()).unwrap()
    }

    #[test]
    fn svd_direct_recovers_two_bin_truth() {
        let a = tf(2, 2, vec![c(0.3, -0.7), c(0.9, 0.2), c(-0.4, 0.5), c(0.1, 0.8)]);
        let expected = normalize_rtf(&a, 0).unwrap();
        for s12 in [c(0.2, 0.1), c(0.0, 0.0)] {
            let rd = two_bin_target(&a, 0.8, 0.4, s12);
            let layout = a.layout;
            let rv = HermitianMatrix::identity(4).scaled(0.5);
            let rx = rd.try_add(&rv).unwrap();
            let est = svd_direct(&cov(layout, rx), &cov(layout, rv), 0).unwrap();
            assert_close(&est, &expected, 1e-10);
        }
    }

    #[test]
    fn single_sensor_is_all_ones() {
        let layout = Layout::new(3, 1).unwrap();
        let rx = cov(layout, HermitianMatrix::identity(3).scaled(2.0));
        let rv = cov(layout, HermitianMatrix::identity(3));
        for est in [svd_direct(&rx, &rv, 0).unwrap(), covariance_whitening(&rx, &rv, 0).unwrap()] {
            assert!(est.values.iter().all(|&z| z == c(1.0, 0.0)));
        }
    }

    #[test]
    fn cw_recovers_rank_one_plus_identity() {
        let a = tf(1, 3, vec![c(0.5, 0.5), c(-0.2, 0.9), c(0.7, -0.1)]);
        let layout = a.layout;
        let rd = HermitianMatrix::from_fn(3, |i, j| a.values[i] * a.values[j].conj() * 2.0).unwrap();
        let rv = HermitianMatrix::identity(3);
        let rx = rd.try_add(&rv).unwrap();
        let est = covariance_whitening(&cov(layout, rx), &cov(layout, rv), 1).unwrap();
        assert_close(&est, &normalize_rtf(&a, 1).unwrap(), 1e-12);
        assert_eq!(est.status[0], BinStatus::Ok);
    }

    #[test]
    fn cw_flags_noise_only_bins() {
        let layout = Layout::new(2, 2).unwrap();
        let rv = cov(layout, HermitianMatrix::from_real_diagonal(&[1.0, 2.0, 1.5, 0.5]));
        let est = covariance_whitening(&rv, &rv, 0).unwrap();
        assert!(est.status.iter().all(|s| *s == BinStatus::LowConfidence));
        assert!(est.values.iter().all(|z| z.re.is_finite()));
    }

    #[test]
    fn svd_direct_flags_empty_blocks() {
        let layout = Layout::new(2, 2).unwrap();
        let a = tf(2, 2, vec![c(1.0, 0.0), c(0.5, 0.5), c(0.0, 0.0), c(0.0, 0.0)]);
        let ones = HermitianMatrix::from_fn(4, |_, _| c(1.0, 0.0)).unwrap();
        let rd = desired_covariance(&a, &ones);
        let est = svd_direct_from_target(&cov(layout, rd), 0).unwrap();
        assert_eq!(est.status, vec![BinStatus::Ok, BinStatus::Undetermined]);
        assert_eq!(est.bin(1), &[c(1.0, 0.0), c(1.0, 0.0)]);
        assert!((est.get(0, 1) - c(0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn exact_inputs_recover_truth_for_both_estimators() {
        for seed in 0..6u64 {
            let cfg = ScenarioConfig {
                bins: 2 + seed as usize % 4,
                sensors: 2 + seed as usize % 3,
                rho_f: 0.3 * (seed % 4) as f64,
                upsilon_f: 0.2 * (seed % 5) as f64,
                powers: if seed % 2 == 0 { PowerProfile::Equal } else { PowerProfile::RandomUniform },
                ..Default::default()
            };
            let t = build_truth(&cfg, &mut stream_rng(seed, 0)).unwrap();
            let expected = normalize_rtf(&t.a, 0).unwrap();
            let svd = svd_direct(&t.r_x, &t.r_v, 0).unwrap();
            let cw = covariance_whitening(&t.r_x, &t.r_v, 0).unwrap();
            assert_close(&svd, &expected, 1e-8);
            assert_close(&cw, &expected, 1e-8);
            assert!(hermitian_angle(&svd, &expected).unwrap() < 1e-7);
        }
    }

    #[test]
    fn single_bin_estimators_coincide() {
        let cfg = ScenarioConfig { bins: 1, sensors: 4, frames: 50, ..Default::default() };
        let t = build_truth(&cfg, &mut stream_rng(3, 0)).unwrap();
        let r = crate::scenario::sample_realizations(&t, 50, &mut stream_rng(3, 1)).unwrap();
        let rx = crate::covariance::sample_covariance(&r.noisy).unwrap();
        let svd = svd_direct(&rx, &t.r_v, 2).unwrap();
        let cw = covariance_whitening(&rx, &t.r_v, 2).unwrap();
        assert_close(&svd, &cw, 1e-8);
    }

    #[test]
    fn per_bin_scaling_of_atf_is_invisible() {
        let cfg = ScenarioConfig { bins: 3, sensors: 3, rho_f: 0.5, ..Default::default() };
        let t = build_truth(&cfg, &mut stream_rng(8, 0)).unwrap();
        let scale = [c(2.0, -1.0), c(0.1, 0.3), c(-5.0, 0.0)];
        let mut a2 = t.a.clone();
        for (i, z) in a2.values.iter_mut().enumerate() {
            *z *= scale[i / 3];
        }
        let rd = desired_covariance(&a2, &t.r_s);
        let rx = cov(t.layout(), rd.try_add(t.r_v.matrix()).unwrap());
        let base = svd_direct(&t.r_x, &t.r_v, 0).unwrap();
        assert_close(&svd_direct(&rx, &t.r_v, 0).unwrap(), &base, 1e-10);
        assert_close(&covariance_whitening(&rx, &t.r_v, 0).unwrap(), &base, 1e-10);
    }

    #[test]
    fn sensor_permutation_commutes() {
        let cfg = ScenarioConfig { bins: 3, sensors: 3, frames: 40, ..Default::default() };
        let t = build_truth(&cfg, &mut stream_rng(12, 0)).unwrap();
        let r = crate::scenario::sample_realizations(&t, 40, &mut stream_rng(12, 1)).unwrap();
        let rx = crate::covariance::sample_covariance(&r.noisy).unwrap();
        let perm = [2usize, 0, 1];
        let inv = [1usize, 2, 0];
        let px = permute_covariance(&rx, &perm).unwrap();
        let pv = permute_covariance(&t.r_v, &perm).unwrap();
        // reference sensor 0 in the original is position inv[0] after permuting
        for f in [svd_direct, covariance_whitening] {
            let direct = f(&rx, &t.r_v, 0).unwrap();
            let permuted = f(&px, &pv, inv[0]).unwrap();
            let back = permute_sensors(&permuted.values, t.layout(), &inv);
            for (x, y) in back.iter().zip(&direct.values) {
                assert!((x - y).norm() < 1e-8);
            }
        }
    }
}
