//! Error metrics and summary statistics.

use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, C64};
use crate::rtf::Rtf;

/// Value reported instead of `-inf` dB for an exact match.
pub const DB_FLOOR: f64 = -300.0;

/// `10 log10 sqrt(||a_hat - a||^2 / KM)`.
pub fn rmse_db(a_hat: &Rtf, a: &Rtf) -> Result<f64> {
    check_same(a_hat, a)?;
    let sq: f64 = a_hat
        .values
        .iter()
        .zip(&a.values)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    Ok(to_db((sq / a.values.len() as f64).sqrt()))
}

/// Mean per-bin Hermitian angle in radians.
pub fn hermitian_angle(a_hat: &Rtf, a: &Rtf) -> Result<f64> {
    hermitian_angle_masked(a_hat, a, None)
}

/// Hermitian angle averaged over bins where `mask` is true (all bins when
/// `None`). Bins where either vector is zero are skipped; if nothing is left
/// the result is zero.
pub fn hermitian_angle_masked(a_hat: &Rtf, a: &Rtf, mask: Option<&[bool]>) -> Result<f64> {
    check_same(a_hat, a)?;
    let bins = a.layout.bins;
    if let Some(mask) = mask {
        if mask.len() != bins {
            return Err(Error::DimensionMismatch {
                expected: bins,
                got: mask.len(),
            });
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in 0..bins {
        if mask.is_some_and(|m| !m[k]) {
            continue;
        }
        let (x, y) = (a_hat.bin(k), a.bin(k));
        let nx = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let ny = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nx == 0.0 || ny == 0.0 {
            continue;
        }
        sum += angle_between(x, y, nx, ny);
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// `acos(|x^H y| / (|x| |y|))`, evaluated as `2 atan2(|u - v|, |u + v|)` on
/// the phase-aligned unit vectors, which stays accurate near zero where the
/// arccosine loses half the significant digits.
fn angle_between(x: &[C64], y: &[C64], nx: f64, ny: f64) -> f64 {
    let inner: C64 = x.iter().zip(y).map(|(p, q)| p.conj() * q).sum();
    let phase = if inner.norm() > 0.0 {
        inner / inner.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let (mut diff, mut plus) = (0.0, 0.0);
    for (p, q) in x.iter().zip(y) {
        let u = p * phase / nx;
        let v = q / ny;
        diff += (u - v).norm_sqr();
        plus += (u + v).norm_sqr();
    }
    (2.0 * diff.sqrt().atan2(plus.sqrt())).clamp(0.0, std::f64::consts::FRAC_PI_2)
}

/// `10 log10(tr R_d / tr R_v)`.
pub fn snr_db(r_d: &HermitianMatrix, r_v: &HermitianMatrix) -> Result<f64> {
    let (td, tv) = (r_d.trace(), r_v.trace());
    if !(td > 0.0 && tv > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "SNR needs positive traces (got {td:.3e}, {tv:.3e})"
        )));
    }
    Ok(10.0 * (td / tv).log10())
}

/// Per-entry bound in the same units as [`rmse_db`]:
/// `10 log10 sqrt(mean(bounds))`.
pub fn crb_db(bounds: &[f64]) -> f64 {
    if bounds.is_empty() {
        return DB_FLOOR;
    }
    to_db((bounds.iter().sum::<f64>() / bounds.len() as f64).sqrt())
}

fn to_db(amplitude: f64) -> f64 {
    if amplitude > 0.0 {
        (10.0 * amplitude.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Normal-approximation 95 % interval: `mean ± 1.96 s / sqrt(n)`, with `s`
/// the root-mean-square deviation from the mean (normalized by `n`).
pub fn confidence_interval_95(samples: &[f64]) -> Result<Interval> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "confidence interval needs at least 2 samples (got {n})"
        )));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let half = 1.96 * var.sqrt() / (n as f64).sqrt();
    Ok(Interval {
        mean,
        lo: mean - half,
        hi: mean + half,
    })
}

fn check_same(a_hat: &Rtf, a: &Rtf) -> Result<()> {
    if a_hat.layout != a.layout {
        return Err(Error::DimensionMismatch {
            expected: a.layout.len(),
            got: a_hat.layout.len(),
        });
    }
    Ok(())
}
