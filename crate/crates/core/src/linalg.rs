//! Dense complex linear algebra.
//!
//! A thin layer over `faer` that pins down the contracts the estimators and
//! bounds rely on: eigenvalues and singular values are always returned in
//! descending order, the generalized eigendecomposition of a Hermitian pencil
//! is normalized so that `U^H B U = I`, and PSD square roots / floors clip
//! round-off negatives to zero.
//!
//! Eigen and singular vectors carry an arbitrary unit-modulus phase per
//! column. Nothing here normalizes it; callers that need a phase reference
//! (RTF normalization) remove it themselves.

use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Mat, MatRef, Par, Side};
use num_complex::Complex64;

pub type C64 = Complex64;

/// Dense complex matrix, row/column indexed as `m[(row, col)]`.
pub type ComplexMatrix = Mat<C64>;

/// Relative departure from Hermitian symmetry tolerated before construction
/// is rejected. Anything below this is symmetrized away.
const HERMITIAN_REJECT_TOL: f64 = 1e-6;

/// Relative diagonal loading applied when a Cholesky factorization fails once.
pub const CHOLESKY_JITTER: f64 = 1e-10;

/// Eigenvalues down to `-PSD_TOL * lambda_max` are treated as round-off.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error(
        "{op} did not converge (order {order}, frobenius norm {norm:.3e}, \
         diagonal range [{diag_min:.3e}, {diag_max:.3e}])"
    )]
    NoConvergence {
        op: &'static str,
        order: usize,
        norm: f64,
        diag_min: f64,
        diag_max: f64,
    },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is not positive semidefinite (min eigenvalue {min:.3e}, max {max:.3e})")]
    NotPsd { min: f64, max: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min:.3e})")]
    NotPositiveDefinite { min: f64 },
}

/// Square complex matrix that is Hermitian by construction.
#[derive(Debug, Clone)]
pub struct HermitianMatrix {
    inner: Mat<C64>,
}

impl HermitianMatrix {
    /// Wraps `m`, replacing it by `(m + m^H) / 2`.
    ///
    /// Rejects non-square or non-finite input, and input whose anti-Hermitian
    /// part exceeds `1e-6` of its norm (a sign that the caller passed the
    /// wrong matrix rather than one with round-off asymmetry).
    pub fn new(m: Mat<C64>) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        ensure_finite(m.as_ref())?;
        let deviation = hermitian_deviation(m.as_ref());
        if deviation > HERMITIAN_REJECT_TOL {
            return Err(LinalgError::NotHermitian { deviation });
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without the deviation check. Used for matrices that are
    /// Hermitian in exact arithmetic (products like `A R A^H`).
    pub(crate) fn symmetrized(mut m: Mat<C64>) -> Self {
        let n = m.nrows();
        for j in 0..n {
            let d = m[(j, j)].re;
            m[(j, j)] = C64::new(d, 0.0);
            for i in (j + 1)..n {
                let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                m[(i, j)] = avg;
                m[(j, i)] = avg.conj();
            }
        }
        Self { inner: m }
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> C64) -> Result<Self, LinalgError> {
        Self::new(Mat::from_fn(n, n, f))
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            inner: Mat::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: Mat::identity(n, n),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            inner: Mat::from_fn(n, n, |i, j| {
                if i == j {
                    C64::new(diag[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        }
    }

    pub fn order(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_ref(&self) -> MatRef<'_, C64> {
        self.inner.as_ref()
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.inner
    }

    pub fn into_inner(self) -> Mat<C64> {
        self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.inner[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.order()).map(|i| self.inner[(i, i)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self.as_ref())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            inner: Mat::from_fn(self.order(), self.order(), |i, j| self.inner[(i, j)] * c),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, LinalgError> {
        same_shape(self.as_ref(), other.as_ref())?;
        Ok(Self {
            inner: Mat::from_fn(self.order(), self.order(), |i, j| {
                self.inner[(i, j)] + other.inner[(i, j)]
            }),
        })
    }

    /// Adds `c` to every diagonal entry.
    pub fn add_diagonal(&self, c: f64) -> Self {
        let mut m = self.inner.clone();
        for i in 0..self.order() {
            m[(i, i)].re += c;
        }
        Self { inner: m }
    }

    /// `P^H self P` for any conformable `P`, re-symmetrized.
    pub fn congruence(&self, p: MatRef<'_, C64>) -> Self {
        let tmp = self.as_ref() * p;
        Self::symmetrized(p.adjoint() * tmp.as_ref())
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: Mat<C64>,
}

/// Thin singular value decomposition `A = U diag(s) Vh`, values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat<C64>,
    pub singular_values: Vec<f64>,
    pub vh: Mat<C64>,
}

/// Generalized eigendecomposition of a Hermitian pencil `(A, B)` with `B` HPD.
///
/// `A U = B U diag(values)`, `U^H B U = I` and `left = B U`, so that
/// `left^H A = diag(values) left^H B` and `U = left^{-H}`.
#[derive(Debug, Clone)]
pub struct Gevd {
    pub values: Vec<f64>,
    pub right: Mat<C64>,
    pub left: Mat<C64>,
}

pub fn hermitian_eig(h: &HermitianMatrix) -> Result<HermitianEig, LinalgError> {
    let n = h.order();
    if n == 0 {
        return Ok(HermitianEig {
            values: Vec::new(),
            vectors: Mat::zeros(0, 0),
        });
    }
    let evd = h
        .as_ref()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| no_convergence("hermitian_eig", h.as_ref()))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values = (0..n).rev().map(|i| s[i].re).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok(HermitianEig { values, vectors })
}

pub fn hermitian_eigenvalues(h: &HermitianMatrix) -> Result<Vec<f64>, LinalgError> {
    if h.order() == 0 {
        return Ok(Vec::new());
    }
    let mut values = h
        .as_ref()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| no_convergence("hermitian_eigenvalues", h.as_ref()))?;
    values.reverse();
    Ok(values)
}

pub fn svd(a: MatRef<'_, C64>) -> Result<Svd, LinalgError> {
    ensure_finite(a)?;
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Ok(Svd {
            u: Mat::zeros(a.nrows(), 0),
            singular_values: Vec::new(),
            vh: Mat::zeros(0, a.ncols()),
        });
    }
    let dec = a.thin_svd().map_err(|_| no_convergence("svd", a))?;
    let s = dec.S().column_vector();
    Ok(Svd {
        u: dec.U().to_owned(),
        singular_values: (0..k).map(|i| s[i].re).collect(),
        vh: dec.V().adjoint().to_owned(),
    })
}

/// Lower Cholesky factor of `b`, retrying once with diagonal loading of
/// `CHOLESKY_JITTER * trace / order` if the first attempt fails.
pub fn cholesky_with_jitter(b: &HermitianMatrix) -> Option<Mat<C64>> {
    if let Ok(llt) = b.as_ref().llt(Side::Lower) {
        return Some(llt.L().to_owned());
    }
    let n = b.order();
    let jitter = CHOLESKY_JITTER * b.trace().abs() / n.max(1) as f64;
    if jitter <= 0.0 || !jitter.is_finite() {
        return None;
    }
    b.add_diagonal(jitter)
        .as_ref()
        .llt(Side::Lower)
        .ok()
        .map(|llt| llt.L().to_owned())
}

/// Generalized eigendecomposition of the pencil `(a, b)`, `b` positive definite.
///
/// Cholesky route: with `b = L L^H`, the standard Hermitian problem
/// `L^{-1} a L^{-H} W = W D` gives `U = L^{-H} W` and `left = L W`. When the
/// factorization fails even after jitter, falls back to eigen-whitening of
/// `b`, which reports the offending eigenvalue if `b` is not definite.
pub fn gevd_hpsd(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<Gevd, LinalgError> {
    same_shape(a.as_ref(), b.as_ref())?;
    match cholesky_with_jitter(b) {
        Some(l) => gevd_cholesky(a, l.as_ref()),
        None => gevd_whitening(a, b),
    }
}

fn gevd_cholesky(a: &HermitianMatrix, l: MatRef<'_, C64>) -> Result<Gevd, LinalgError> {
    let mut x = a.matrix().clone();
    solve_lower_triangular_in_place(l, x.as_mut(), Par::Seq);
    // (L^{-1} A)^H = A L^{-H} since A is Hermitian
    let mut c = x.adjoint().to_owned();
    solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let eig = hermitian_eig(&HermitianMatrix::symmetrized(c))?;
    let mut right = eig.vectors.clone();
    solve_upper_triangular_in_place(l.adjoint(), right.as_mut(), Par::Seq);
    let left = l * eig.vectors.as_ref();
    Ok(Gevd {
        values: eig.values,
        right,
        left,
    })
}

fn gevd_whitening(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<Gevd, LinalgError> {
    let eb = hermitian_eig(b)?;
    let n = b.order();
    let min = eb.values.last().copied().unwrap_or(0.0);
    if min <= 0.0 || !min.is_finite() {
        return Err(LinalgError::NotPositiveDefinite { min });
    }
    let whiten = Mat::from_fn(n, n, |i, j| eb.vectors[(i, j)] / eb.values[j].sqrt());
    let color = Mat::from_fn(n, n, |i, j| eb.vectors[(i, j)] * eb.values[j].sqrt());
    let c = a.congruence(whiten.as_ref());
    let eig = hermitian_eig(&c)?;
    Ok(Gevd {
        values: eig.values,
        right: whiten.as_ref() * eig.vectors.as_ref(),
        left: color.as_ref() * eig.vectors.as_ref(),
    })
}

/// Hermitian square root `S` with `S S^H = r`.
pub fn psd_sqrt(r: &HermitianMatrix) -> Result<ComplexMatrix, LinalgError> {
    let eig = hermitian_eig(r)?;
    check_psd(&eig.values)?;
    let n = r.order();
    let scaled = Mat::from_fn(n, n, |i, j| eig.vectors[(i, j)] * eig.values[j].max(0.0).sqrt());
    Ok(scaled.as_ref() * eig.vectors.adjoint())
}

/// Replaces negative eigenvalues by zero, keeping the eigenvectors.
pub fn psd_floor(h: &HermitianMatrix) -> Result<HermitianMatrix, LinalgError> {
    let eig = hermitian_eig(h)?;
    Ok(reconstruct(&eig.vectors, &eig.values, |v| v.max(0.0)))
}

/// `V diag(f(values)) V^H`.
pub fn reconstruct(vectors: &Mat<C64>, values: &[f64], f: impl Fn(f64) -> f64) -> HermitianMatrix {
    let n = vectors.nrows();
    let k = values.len();
    let scaled = Mat::from_fn(n, k, |i, j| vectors[(i, j)] * f(values[j]));
    HermitianMatrix::symmetrized(scaled.as_ref() * vectors.as_ref().get(.., ..k).adjoint())
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn hpd_inverse(b: &HermitianMatrix) -> Result<HermitianMatrix, LinalgError> {
    let n = b.order();
    let llt = b.as_ref().llt(Side::Lower).map_err(|_| LinalgError::NotPositiveDefinite {
        min: hermitian_eigenvalues(b)
            .ok()
            .and_then(|v| v.last().copied())
            .unwrap_or(f64::NAN),
    })?;
    let mut inv = Mat::<C64>::identity(n, n);
    let l = llt.L();
    solve_lower_triangular_in_place(l, inv.as_mut(), Par::Seq);
    solve_upper_triangular_in_place(l.adjoint(), inv.as_mut(), Par::Seq);
    Ok(HermitianMatrix::symmetrized(inv))
}

/// `ln det b` for Hermitian positive definite `b`.
pub fn hpd_logdet(b: &HermitianMatrix) -> Result<f64, LinalgError> {
    let llt = b
        .as_ref()
        .llt(Side::Lower)
        .map_err(|_| LinalgError::NotPositiveDefinite { min: f64::NAN })?;
    let l = llt.L();
    Ok((0..b.order()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Moore-Penrose pseudo-inverse of a Hermitian matrix.
///
/// Eigenvalues with modulus below `rtol * max|eigenvalue|` are discarded.
/// Also returns the ratio of largest to smallest retained eigenvalue modulus
/// (infinite if everything was discarded).
pub fn hermitian_pinv(h: &HermitianMatrix, rtol: f64) -> Result<(HermitianMatrix, f64), LinalgError> {
    let eig = hermitian_eig(h)?;
    let max = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = rtol * max;
    let kept_min = eig
        .values
        .iter()
        .filter(|v| v.abs() > cutoff)
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let condition = if kept_min.is_finite() && kept_min > 0.0 {
        max / kept_min
    } else {
        f64::INFINITY
    };
    let pinv = reconstruct(&eig.vectors, &eig.values, |v| {
        if v.abs() > cutoff {
            1.0 / v
        } else {
            0.0
        }
    });
    Ok((pinv, condition))
}

pub fn frobenius_norm(a: MatRef<'_, C64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// `||a - b||_F`.
pub fn frobenius_distance(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += (a[(i, j)] - b[(i, j)]).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> ComplexMatrix {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

fn check_psd(values: &[f64]) -> Result<(), LinalgError> {
    let max = values.first().copied().unwrap_or(0.0);
    let min = values.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL * max.max(0.0) || (max <= 0.0 && min < 0.0) {
        return Err(LinalgError::NotPsd { min, max });
    }
    Ok(())
}

fn ensure_finite(a: MatRef<'_, C64>) -> Result<(), LinalgError> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let z = a[(i, j)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(LinalgError::NonFinite);
            }
        }
    }
    Ok(())
}

fn same_shape(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Result<(), LinalgError> {
    if (a.nrows(), a.ncols()) != (b.nrows(), b.ncols()) {
        return Err(LinalgError::DimensionMismatch {
            left: (a.nrows(), a.ncols()),
            right: (b.nrows(), b.ncols()),
        });
    }
    Ok(())
}

fn hermitian_deviation(m: MatRef<'_, C64>) -> f64 {
    let norm = frobenius_norm(m);
    if norm == 0.0 {
        return 0.0;
    }
    let n = m.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            acc += (m[(i, j)] - m[(j, i)].conj()).norm_sqr();
        }
    }
    acc.sqrt() / norm
}

fn no_convergence(op: &'static str, a: MatRef<'_, C64>) -> LinalgError {
    let n = a.nrows().min(a.ncols());
    let diag = (0..n).map(|i| a[(i, i)].re);
    LinalgError::NoConvergence {
        op,
        order: a.nrows(),
        norm: frobenius_norm(a),
        diag_min: diag.clone().fold(f64::INFINITY, f64::min),
        diag_max: diag.fold(f64::NEG_INFINITY, f64::max),
    }
}
