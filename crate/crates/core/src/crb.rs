//! Cramér-Rao bounds for RTF estimation.
//!
//! Parameters are `θ = [a; a*]` and the Fisher information is the proper
//! complex one, `I = E[(∂ℓ/∂θ*)(∂ℓ/∂θ*)^H] = -E[∂²ℓ / ∂θ* ∂θ^T]`. Its
//! top-left block bounds `E[(â - a)(â - a)^H]`, and the RTF bound is
//! `J C J^H` with `J = ∂g/∂a` (the RTF map is holomorphic in `a`).
//!
//! Unconditional model, `R_x(a) = A R_s A^H + R_v`:
//!
//! * `∂R_x/∂a_k* = F_k = A R_s E^{kk}` and `∂R_x/∂a_m = G_m = E^{mm} R_s A^H`;
//! * `I_aa[m, k]  = L tr(Ri F_m Ri G_k)`, i.e. `L (Ri ∘ W^T)` with
//!   `W = R_s A^H Ri A R_s`;
//! * `I_aa*[m, k] = L tr(Ri F_m Ri F_k)`, i.e. `L (Z ∘ Z^T)` with `Z = Ri A R_s`.
//!
//! The sign of `I_aa` is positive: it is a Gram matrix of score components,
//! and it matches the finite-difference oracle below.
//!
//! Conditional model (known `s(l)`): the likelihood is quadratic in `a` with
//! `∂²ℓ/∂a* ∂a^T = -B`, `B = Σ_l S(l)^H R_v^{-1} S(l)`, so the bound is
//! `J B^{-1} J^H`. The maximum-likelihood estimator of this linear model has
//! covariance exactly `B^{-1}`, which the tests check by simulation.

use faer::Mat;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, HermitianMatrix, C64};
use crate::model::{Layout, TransferFunction};
use crate::scenario::complex_normal_matrix;

/// Relative eigenvalue cutoff for the FIM pseudo-inverse.
pub const PINV_RTOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CrbResult {
    pub layout: Layout,
    pub reference_sensor: usize,
    /// Per-entry variance bounds (diagonal of `J C J^H`); zero at the reference.
    pub bounds: Vec<f64>,
    /// Inverse-information block `C` the bounds were computed from.
    pub covariance: HermitianMatrix,
    /// Ratio of largest to smallest retained eigenvalue of the inverted matrix.
    pub fim_condition: f64,
}

impl CrbResult {
    /// Full bound matrix `J C J^H` (dense; intended for small problems).
    pub fn bound_matrix(&self, a: &TransferFunction) -> Result<HermitianMatrix> {
        let j = rtf_jacobian(a, self.reference_sensor)?;
        let jc = j.as_ref() * self.covariance.as_ref();
        Ok(HermitianMatrix::symmetrized(jc.as_ref() * j.adjoint()))
    }
}

/// `∂g/∂a` for `g(a)_{k,m} = a_{k,m} / a_{k,r}`; block-diagonal over bins.
pub fn rtf_jacobian(a: &TransferFunction, reference_sensor: usize) -> Result<ComplexMatrix> {
    let layout = a.layout;
    check_reference(layout, reference_sensor)?;
    let n = layout.len();
    let mut j = Mat::<C64>::zeros(n, n);
    for k in 0..layout.bins {
        let ar = reference_entry(a, k, reference_sensor)?;
        let ir = layout.index(k, reference_sensor);
        for m in 0..layout.sensors {
            if m == reference_sensor {
                continue;
            }
            let i = layout.index(k, m);
            j[(i, i)] = ar.inv();
            j[(i, ir)] = -a.values[i] / (ar * ar);
        }
    }
    Ok(j)
}

/// Bound when the source realizations `s(l)` are known.
///
/// `s_frames` holds the per-sensor-expanded source vectors as columns
/// (`KM x L`).
pub fn conditional_crb(
    s_frames: &ComplexMatrix,
    r_v: &HermitianMatrix,
    a: &TransferFunction,
    reference_sensor: usize,
) -> Result<CrbResult> {
    let layout = a.layout;
    check_reference(layout, reference_sensor)?;
    layout.check_len(s_frames.nrows())?;
    layout.check_len(r_v.order())?;
    if s_frames.ncols() == 0 {
        return Err(Error::EmptyFrames);
    }
    let ri = linalg::hpd_inverse(r_v).map_err(crate::covariance::noise_error)?;
    let p = s_frames.as_ref() * s_frames.adjoint();
    let n = layout.len();
    let b = HermitianMatrix::symmetrized(Mat::from_fn(n, n, |i, j| ri.get(i, j) * p[(i, j)].conj()));
    let b_inv = match linalg::hpd_inverse(&b) {
        Ok(inv) => inv,
        Err(_) => {
            let max = (0..n).map(|i| p[(i, i)].re).fold(0.0, f64::max);
            let bins: Vec<usize> = (0..layout.bins)
                .filter(|&k| layout.bin_range(k).all(|i| p[(i, i)].re <= 1e-12 * max))
                .collect();
            return Err(Error::RankDeficient { bins });
        }
    };
    let condition = condition_number(&b)?;
    finish(a, reference_sensor, b_inv, condition)
}

/// Proper complex FIM of `θ = [a; a*]` for the unconditional model.
pub fn unconditional_fim(
    a: &TransferFunction,
    r_s: &HermitianMatrix,
    r_v: &HermitianMatrix,
    frames: usize,
) -> Result<ComplexMatrix> {
    let layout = a.layout;
    layout.check_len(r_s.order())?;
    layout.check_len(r_v.order())?;
    let n = layout.len();
    let rx = rx_of(&a.values, r_s, r_v);
    let ri = linalg::hpd_inverse(&rx)?;
    let ars = Mat::from_fn(n, n, |i, j| a.values[i] * r_s.get(i, j));
    let z = ri.as_ref() * ars.as_ref();
    let w = ars.adjoint() * z.as_ref();
    let l = frames as f64;
    let mut fim = Mat::<C64>::zeros(2 * n, 2 * n);
    for m in 0..n {
        for k in 0..n {
            let iaa = ri.get(m, k) * w[(k, m)] * l;
            let iac = z[(m, k)] * z[(k, m)] * l;
            fim[(m, k)] = iaa;
            fim[(m, n + k)] = iac;
            fim[(n + m, k)] = iac.conj();
            fim[(n + m, n + k)] = iaa.conj();
        }
    }
    Ok(fim)
}

/// Bound when only the source covariance `R_s` is known.
pub fn unconditional_crb(
    a: &TransferFunction,
    r_s: &HermitianMatrix,
    r_v: &HermitianMatrix,
    frames: usize,
    reference_sensor: usize,
) -> Result<CrbResult> {
    check_reference(a.layout, reference_sensor)?;
    let n = a.layout.len();
    let fim = HermitianMatrix::symmetrized(unconditional_fim(a, r_s, r_v, frames)?);
    let (pinv, condition) = linalg::hermitian_pinv(&fim, PINV_RTOL)?;
    let c = HermitianMatrix::symmetrized(pinv.as_ref().get(..n, ..n).to_owned());
    finish(a, reference_sensor, c, condition)
}

fn finish(
    a: &TransferFunction,
    reference_sensor: usize,
    c: HermitianMatrix,
    fim_condition: f64,
) -> Result<CrbResult> {
    let layout = a.layout;
    let mut bounds = vec![0.0; layout.len()];
    for k in 0..layout.bins {
        let ar = reference_entry(a, k, reference_sensor)?;
        let ir = layout.index(k, reference_sensor);
        for m in 0..layout.sensors {
            if m == reference_sensor {
                continue;
            }
            let i = layout.index(k, m);
            // row i of J has alpha at column i and beta at column ir
            let alpha = ar.inv();
            let beta = -a.values[i] / (ar * ar);
            let v = alpha.norm_sqr() * c.get(i, i).re
                + beta.norm_sqr() * c.get(ir, ir).re
                + 2.0 * (alpha * c.get(i, ir) * beta.conj()).re;
            bounds[i] = v.max(0.0);
        }
    }
    Ok(CrbResult {
        layout,
        reference_sensor,
        bounds,
        covariance: c,
        fim_condition,
    })
}

fn rx_of(a: &[C64], r_s: &HermitianMatrix, r_v: &HermitianMatrix) -> HermitianMatrix {
    let n = a.len();
    HermitianMatrix::symmetrized(Mat::from_fn(n, n, |i, j| {
        a[i] * r_s.get(i, j) * a[j].conj() + r_v.get(i, j)
    }))
}

fn condition_number(h: &HermitianMatrix) -> Result<f64> {
    let ev = linalg::hermitian_eigenvalues(h)?;
    let max = ev.first().copied().unwrap_or(0.0).abs();
    let min = ev.last().copied().unwrap_or(0.0).abs();
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

fn reference_entry(a: &TransferFunction, k: usize, r: usize) -> Result<C64> {
    let ar = a.get(k, r);
    let norm = a.bin(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(ar.norm() > crate::rtf::DEGENERATE_REFERENCE_TOL * norm) {
        return Err(Error::DegenerateReference { bin: k });
    }
    Ok(ar)
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

/// Monte-Carlo estimate of the unconditional FIM.
#[derive(Debug, Clone)]
pub struct FimEstimate {
    /// `2KM x 2KM` proper complex FIM in the `[a; a*]` basis.
    pub fim: ComplexMatrix,
    /// Frobenius norm of the entrywise standard error of `fim`.
    pub standard_error: f64,
}

/// Converts a real Hessian over `ξ = [Re a; Im a]` to the Wirtinger block
/// `∂²f / ∂θ* ∂θ^T = ¼ T H T^H`, `T = [[I, jI], [I, -jI]]`.
pub fn real_hessian_to_wirtinger(h: &Mat<f64>) -> ComplexMatrix {
    let n2 = h.nrows();
    let n = n2 / 2;
    let t = Mat::from_fn(n2, n2, |i, j| {
        let (bi, bj) = (i / n, j / n);
        if i % n != j % n {
            C64::new(0.0, 0.0)
        } else {
            match (bi, bj) {
                (0, 0) | (1, 0) => C64::new(1.0, 0.0),
                (0, 1) => C64::new(0.0, 1.0),
                _ => C64::new(0.0, -1.0),
            }
        }
    });
    let hc = Mat::from_fn(n2, n2, |i, j| C64::new(h[(i, j)], 0.0));
    let th = t.as_ref() * hc.as_ref();
    let out = th.as_ref() * t.adjoint();
    Mat::from_fn(n2, n2, |i, j| out[(i, j)] * 0.25)
}

/// Central-difference Hessian of a scalar function over real coordinates.
pub fn central_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Mat<f64> {
    let n = x.len();
    let mut out = Mat::<f64>::zeros(n, n);
    let mut p = x.to_vec();
    let mut eval = |dp: (usize, f64), dq: (usize, f64)| {
        p.copy_from_slice(x);
        p[dp.0] += dp.1;
        p[dq.0] += dq.1;
        f(&p)
    };
    for i in 0..n {
        for j in i..n {
            let v = (eval((i, h), (j, h)) - eval((i, h), (j, -h)) - eval((i, -h), (j, h))
                + eval((i, -h), (j, -h)))
                / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Monte-Carlo estimate of `-E[∂²ℓ]` for the unconditional log-likelihood
/// `ℓ(a) = -L ln det R_x(a) - L tr(R̂_x R_x(a)^{-1})`.
///
/// Each trial draws `L` frames from `CN(0, R_x)`, forms the sample covariance,
/// and differentiates `ℓ` by central differences over the `2KM` real
/// coordinates of `a`; the Hessians are converted to the Wirtinger basis and
/// averaged. `ℓ` is affine in `R̂_x`, so the second differences of
/// `ln det R_x` and of `R_x^{-1}` are computed once and reused by every trial.
pub fn numerical_fim_oracle<R: Rng + ?Sized>(
    a: &TransferFunction,
    r_s: &HermitianMatrix,
    r_v: &HermitianMatrix,
    frames: usize,
    n_mc: usize,
    rng: &mut R,
) -> Result<FimEstimate> {
    let n = a.layout.len();
    layout_check(a, r_s, r_v)?;
    if n_mc == 0 || frames == 0 {
        return Err(Error::InvalidArgument("n_mc and L must be positive".into()));
    }
    let scale = a.values.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-3);
    let h = 1e-4 * scale;
    let xi: Vec<f64> = a.values.iter().map(|z| z.re).chain(a.values.iter().map(|z| z.im)).collect();
    let at = |p: &[f64]| -> Vec<C64> { (0..n).map(|i| C64::new(p[i], p[n + i])).collect() };
    let n2 = 2 * n;

    // second differences of ln det R_x and of R_x^{-1}
    let mut d_logdet = Mat::<f64>::zeros(n2, n2);
    let mut d_inv: Vec<ComplexMatrix> = Vec::with_capacity(n2 * (n2 + 1) / 2);
    let mut p = xi.clone();
    for i in 0..n2 {
        for j in i..n2 {
            let mut logdet = 0.0;
            let mut inv = Mat::<C64>::zeros(n, n);
            for (si, sj, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                p.copy_from_slice(&xi);
                p[i] += si * h;
                p[j] += sj * h;
                let rx = rx_of(&at(&p), r_s, r_v);
                logdet += w * linalg::hpd_logdet(&rx)?;
                let ri = linalg::hpd_inverse(&rx)?;
                for c in 0..n {
                    for r in 0..n {
                        inv[(r, c)] += ri.get(r, c) * w;
                    }
                }
            }
            let denom = 4.0 * h * h;
            d_logdet[(i, j)] = logdet / denom;
            d_logdet[(j, i)] = logdet / denom;
            d_inv.push(Mat::from_fn(n, n, |r, c| inv[(r, c)] / denom));
        }
    }

    let rx = rx_of(&a.values, r_s, r_v);
    let root = linalg::psd_sqrt(&rx)?;
    let l = frames as f64;
    let mut sum = Mat::<C64>::zeros(n2, n2);
    let mut sum_sq = Mat::<f64>::zeros(n2, n2);
    for _ in 0..n_mc {
        let x = root.as_ref() * complex_normal_matrix(n, frames, rng).as_ref();
        let rhat = x.as_ref() * x.adjoint();
        let mut hess = Mat::<f64>::zeros(n2, n2);
        let mut idx = 0;
        for i in 0..n2 {
            for j in i..n2 {
                let d = &d_inv[idx];
                idx += 1;
                // tr(R̂ D) with R̂ = X X^H / L
                let mut tr = C64::new(0.0, 0.0);
                for r in 0..n {
                    for c in 0..n {
                        tr += rhat[(r, c)] * d[(c, r)];
                    }
                }
                let v = -l * d_logdet[(i, j)] - tr.re;
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        let neg = real_hessian_to_wirtinger(&hess);
        for j in 0..n2 {
            for i in 0..n2 {
                let v = -neg[(i, j)];
                sum[(i, j)] += v;
                sum_sq[(i, j)] += v.norm_sqr();
            }
        }
    }
    let m = n_mc as f64;
    let fim = Mat::from_fn(n2, n2, |i, j| sum[(i, j)] / m);
    let mut se2 = 0.0;
    if n_mc > 1 {
        for j in 0..n2 {
            for i in 0..n2 {
                let var = (sum_sq[(i, j)] / m - fim[(i, j)].norm_sqr()).max(0.0) * m / (m - 1.0);
                se2 += var / m;
            }
        }
    }
    Ok(FimEstimate {
        fim,
        standard_error: se2.sqrt(),
    })
}

fn layout_check(a: &TransferFunction, r_s: &HermitianMatrix, r_v: &HermitianMatrix) -> Result<()> {
    a.layout.check_len(r_s.order())?;
    a.layout.check_len(r_v.order())
}
