//! Spectral-spatial covariance estimation and target-covariance recovery.
//!
//! The phase-adjusted estimator multiplies the `(k1, k2)` block contribution
//! of frame `l` by `exp(-j 2π l R (b1 - b2) / N)`. That factor separates into
//! a per-bin modulation `exp(-j 2π l R b / N)` applied to each frame before the
//! ordinary sample covariance, which is how it is computed here. The phases
//! come from a table indexed by `(l R b) mod N`, so whenever `R ≡ 0 (mod N)`
//! every factor is exactly one and the two estimators agree bit for bit.

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix, HermitianMatrix, LinalgError, C64};
use crate::model::Layout;

/// `KM x KM` Hermitian covariance of a stacked frequency-major vector.
#[derive(Debug, Clone)]
pub struct SpectralSpatialCovariance {
    layout: Layout,
    matrix: HermitianMatrix,
}

impl SpectralSpatialCovariance {
    pub fn new(layout: Layout, matrix: HermitianMatrix) -> Result<Self> {
        layout.check_len(matrix.order())?;
        Ok(Self { layout, matrix })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> HermitianMatrix {
        self.matrix
    }

    /// Bifrequency block `r(i, j)`: the `M x M` cross-covariance of bins `i`, `j`.
    pub fn block(&self, i: usize, j: usize) -> ComplexMatrix {
        let ri = self.layout.bin_range(i);
        let rj = self.layout.bin_range(j);
        self.matrix.as_ref().get(ri, rj).to_owned()
    }

    /// Diagonal block `r(k, k)` as a Hermitian matrix.
    pub fn diagonal_block(&self, k: usize) -> HermitianMatrix {
        HermitianMatrix::symmetrized(self.block(k, k))
    }

    /// Row block `R^(k)`: the `M x KM` rows belonging to bin `k`.
    pub fn row_block(&self, k: usize) -> ComplexMatrix {
        let rk = self.layout.bin_range(k);
        self.matrix.as_ref().get(rk, ..).to_owned()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            layout: self.layout,
            matrix: self.matrix.scaled(c),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        if self.layout != other.layout {
            return Err(Error::DimensionMismatch {
                expected: self.layout.len(),
                got: other.layout.len(),
            });
        }
        Ok(Self {
            layout: self.layout,
            matrix: self.matrix.try_add(&other.matrix)?,
        })
    }

    /// Restricts to the given bins (in order), keeping all sensors.
    pub fn select_bins(&self, bins: &[usize]) -> Result<Self> {
        let layout = Layout::new(bins.len(), self.layout.sensors)?;
        let m = self.layout.sensors;
        let src = |i: usize| bins[i / m] * m + i % m;
        let inner = HermitianMatrix::symmetrized(Mat::from_fn(layout.len(), layout.len(), |i, j| {
            self.matrix.get(src(i), src(j))
        }));
        Self::new(layout, inner)
    }
}

/// STFT bookkeeping needed by the phase-adjusted estimator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMeta {
    /// Hop between consecutive frames, in samples.
    pub block_shift: usize,
    pub fft_size: usize,
    /// FFT bin index of each stacked bin (the stack may be a sub-band).
    pub bin_indices: Vec<usize>,
}

/// `L` observation vectors of length `KM`, stored as the columns of a matrix.
#[derive(Debug, Clone)]
pub struct FrameBlock {
    layout: Layout,
    frames: ComplexMatrix,
    meta: Option<FrameMeta>,
}

impl FrameBlock {
    pub fn new(layout: Layout, frames: ComplexMatrix, meta: Option<FrameMeta>) -> Result<Self> {
        layout.check_len(frames.nrows())?;
        for j in 0..frames.ncols() {
            for i in 0..frames.nrows() {
                let z = frames[(i, j)];
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(LinalgError::NonFinite.into());
                }
            }
        }
        if let Some(meta) = &meta {
            if meta.bin_indices.len() != layout.bins {
                return Err(Error::DimensionMismatch {
                    expected: layout.bins,
                    got: meta.bin_indices.len(),
                });
            }
            if meta.fft_size == 0 {
                return Err(Error::InvalidArgument("fft_size must be positive".into()));
            }
        }
        Ok(Self {
            layout,
            frames,
            meta,
        })
    }

    pub fn from_vectors(layout: Layout, vectors: &[Vec<C64>], meta: Option<FrameMeta>) -> Result<Self> {
        for v in vectors {
            layout.check_len(v.len())?;
        }
        let frames = Mat::from_fn(layout.len(), vectors.len(), |i, l| vectors[l][i]);
        Self::new(layout, frames, meta)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_frames(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frames(&self) -> &ComplexMatrix {
        &self.frames
    }

    pub fn meta(&self) -> Option<&FrameMeta> {
        self.meta.as_ref()
    }

    pub fn frame(&self, l: usize) -> Vec<C64> {
        (0..self.frames.nrows()).map(|i| self.frames[(i, l)]).collect()
    }

    /// Elementwise difference of two equally shaped blocks; keeps `self`'s metadata.
    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        if self.layout != other.layout || self.n_frames() != other.n_frames() {
            return Err(Error::DimensionMismatch {
                expected: self.frames.nrows() * self.n_frames(),
                got: other.frames.nrows() * other.n_frames(),
            });
        }
        let frames = Mat::from_fn(self.frames.nrows(), self.n_frames(), |i, j| {
            self.frames[(i, j)] - other.frames[(i, j)]
        });
        Ok(Self {
            layout: self.layout,
            frames,
            meta: self.meta.clone(),
        })
    }
}

/// `(1/L) Σ_l x(l) x(l)^H`.
pub fn sample_covariance(x: &FrameBlock) -> Result<SpectralSpatialCovariance> {
    gram(x.layout, x.frames.as_ref())
}

/// Sample covariance of phase-referenced frames; frame `l` (1-based from the
/// first frame of the block) contributes `x_k1 x_k2^H exp(-j 2π l R (b1 - b2) / N)`
/// to block `(k1, k2)`.
pub fn phase_adjusted_covariance(x: &FrameBlock) -> Result<SpectralSpatialCovariance> {
    let meta = x.meta.as_ref().ok_or(Error::MissingFrameMeta)?;
    let n = meta.fft_size as u64;
    let table: Vec<C64> = (0..n)
        .map(|j| C64::from_polar(1.0, -2.0 * std::f64::consts::PI * j as f64 / n as f64))
        .collect();
    let hop = meta.block_shift as u64 % n;
    let m = x.layout.sensors;
    let adjusted = Mat::from_fn(x.frames.nrows(), x.n_frames(), |i, l| {
        let b = meta.bin_indices[i / m] as u64 % n;
        let idx = ((l as u64 + 1) % n) * hop % n * b % n;
        x.frames[(i, l)] * table[idx as usize]
    });
    gram(x.layout, adjusted.as_ref())
}

fn gram(layout: Layout, frames: faer::MatRef<'_, C64>) -> Result<SpectralSpatialCovariance> {
    let l = frames.ncols();
    if l == 0 {
        return Err(Error::EmptyFrames);
    }
    let prod = frames * frames.adjoint();
    let inv_l = 1.0 / l as f64;
    let scaled = Mat::from_fn(prod.nrows(), prod.ncols(), |i, j| prod[(i, j)] * inv_l);
    SpectralSpatialCovariance::new(layout, HermitianMatrix::symmetrized(scaled))
}

/// Rank-limited target covariance from noisy and noise covariances.
///
/// With the generalized eigendecomposition `Rx U = Rv U D`, `U^H Rv U = I`
/// and `Q = Rv U`, we have `Rx = Q D Q^H` and `Rv = Q Q^H`. Keeping the
/// `rank` largest eigenpairs gives `Q_x max(D_x - 1, 0) Q_x^H`.
pub fn estimate_target_covariance(
    rx: &SpectralSpatialCovariance,
    rv: &SpectralSpatialCovariance,
    rank: usize,
) -> Result<SpectralSpatialCovariance> {
    let layout = rx.layout;
    if rv.layout != layout {
        return Err(Error::DimensionMismatch {
            expected: layout.len(),
            got: rv.layout.len(),
        });
    }
    if rank > layout.len() {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} exceeds covariance order {}",
            layout.len()
        )));
    }
    let g = linalg::gevd_hpsd(&rx.matrix, &rv.matrix).map_err(noise_error)?;
    let rd = linalg::reconstruct(&g.left, &g.values[..rank], |d| (d - 1.0).max(0.0));
    SpectralSpatialCovariance::new(layout, rd)
}

pub(crate) fn noise_error(e: LinalgError) -> Error {
    match e {
        LinalgError::NotPositiveDefinite { min } => Error::SingularNoiseCovariance { min },
        other => other.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_distance, hermitian_eigenvalues};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_frames(layout: Layout, l: usize, seed: u64, meta: Option<FrameMeta>) -> FrameBlock {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frames = Mat::from_fn(layout.len(), l, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        FrameBlock::new(layout, frames, meta).unwrap()
    }

    fn meta(k: usize, hop: usize, n: usize) -> FrameMeta {
        FrameMeta {
            block_shift: hop,
            fft_size: n,
            bin_indices: (0..k).map(|b| b + 1).collect(),
        }
    }

    #[test]
    fn single_frame_gives_outer_product() {
        let layout = Layout::new(1, 2).unwrap();
        let x = vec![c(1.0, 2.0), c(-0.5, 0.25)];
        let fb = FrameBlock::from_vectors(layout, std::slice::from_ref(&x), None).unwrap();
        let r = sample_covariance(&fb).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((r.matrix().get(i, j) - x[i] * x[j].conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn standard_basis_frames_give_half_identity() {
        let layout = Layout::new(2, 1).unwrap();
        let e1 = vec![c(1.0, 0.0), c(0.0, 0.0)];
        let e2 = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let fb = FrameBlock::from_vectors(layout, &[e1, e2], None).unwrap();
        let r = sample_covariance(&fb).unwrap();
        let expected = HermitianMatrix::from_real_diagonal(&[0.5, 0.5]);
        assert!(frobenius_distance(r.matrix().as_ref(), expected.as_ref()) < 1e-15);
    }

    #[test]
    fn empty_frames_rejected() {
        let layout = Layout::new(1, 2).unwrap();
        let fb = FrameBlock::new(layout, Mat::zeros(2, 0), None).unwrap();
        assert!(matches!(sample_covariance(&fb), Err(Error::EmptyFrames)));
    }

    #[test]
    fn sample_covariance_is_psd() {
        let fb = random_frames(Layout::new(3, 2).unwrap(), 4, 5, None);
        let r = sample_covariance(&fb).unwrap();
        let ev = hermitian_eigenvalues(r.matrix()).unwrap();
        assert!(*ev.last().unwrap() >= -1e-12 * ev[0]);
    }

    #[test]
    fn phase_adjustment_requires_metadata() {
        let fb = random_frames(Layout::new(2, 2).unwrap(), 3, 1, None);
        assert!(matches!(phase_adjusted_covariance(&fb), Err(Error::MissingFrameMeta)));
    }

    #[test]
    fn phase_adjustment_single_frame_definition() {
        let layout = Layout::new(2, 1).unwrap();
        let (hop, n) = (3, 16);
        let x = vec![c(0.3, -1.0), c(2.0, 0.5)];
        let m = FrameMeta {
            block_shift: hop,
            fft_size: n,
            bin_indices: vec![1, 2],
        };
        let fb = FrameBlock::from_vectors(layout, std::slice::from_ref(&x), Some(m)).unwrap();
        let r = phase_adjusted_covariance(&fb).unwrap();
        let phase = C64::from_polar(
            1.0,
            -2.0 * std::f64::consts::PI * (hop as f64) * (1.0 - 2.0) / n as f64,
        );
        let expected = x[0] * x[1].conj() * phase;
        assert!((r.matrix().get(0, 1) - expected).norm() < 1e-14);
    }

    #[test]
    fn phase_adjustment_preserves_diagonal_blocks() {
        let layout = Layout::new(4, 3).unwrap();
        let fb = random_frames(layout, 7, 9, Some(meta(4, 5, 32)));
        let plain = sample_covariance(&fb).unwrap();
        let adj = phase_adjusted_covariance(&fb).unwrap();
        for k in 0..4 {
            let d = frobenius_distance(plain.block(k, k).as_ref(), adj.block(k, k).as_ref());
            assert!(d <= 1e-14 * linalg::frobenius_norm(plain.block(k, k).as_ref()));
        }
    }

    #[test]
    fn no_overlap_leaves_covariance_unchanged() {
        let layout = Layout::new(3, 2).unwrap();
        for hop in [16usize, 32, 48] {
            let fb = random_frames(layout, 5, 3, Some(meta(3, hop, 16)));
            let plain = sample_covariance(&fb).unwrap();
            let adj = phase_adjusted_covariance(&fb).unwrap();
            assert_eq!(plain.matrix().matrix(), adj.matrix().matrix());
        }
    }

    #[test]
    fn scalar_target_recovery() {
        let layout = Layout::new(1, 1).unwrap();
        let rx = SpectralSpatialCovariance::new(layout, HermitianMatrix::from_real_diagonal(&[3.0])).unwrap();
        let rv = SpectralSpatialCovariance::new(layout, HermitianMatrix::from_real_diagonal(&[1.0])).unwrap();
        let rd = estimate_target_covariance(&rx, &rv, 1).unwrap();
        assert!((rd.matrix().get(0, 0).re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn no_target_gives_zero() {
        let layout = Layout::new(2, 2).unwrap();
        let fb = random_frames(layout, 10, 4, None);
        let rv = sample_covariance(&fb).unwrap();
        let rd = estimate_target_covariance(&rv, &rv, 2).unwrap();
        assert!(rd.matrix().frobenius_norm() < 1e-9 * rv.matrix().frobenius_norm());
    }

    #[test]
    fn rank_larger_than_order_rejected() {
        let layout = Layout::new(1, 2).unwrap();
        let r = SpectralSpatialCovariance::new(layout, HermitianMatrix::identity(2)).unwrap();
        assert!(matches!(
            estimate_target_covariance(&r, &r, 3),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn singular_noise_reported() {
        let layout = Layout::new(1, 2).unwrap();
        let rx = SpectralSpatialCovariance::new(layout, HermitianMatrix::identity(2)).unwrap();
        let rv = SpectralSpatialCovariance::new(layout, HermitianMatrix::from_real_diagonal(&[1.0, -1.0])).unwrap();
        assert!(matches!(
            estimate_target_covariance(&rx, &rv, 1),
            Err(Error::SingularNoiseCovariance { .. })
        ));
    }

    #[test]
    fn block_accessors() {
        let layout = Layout::new(2, 2).unwrap();
        let fb = random_frames(layout, 3, 8, None);
        let r = sample_covariance(&fb).unwrap();
        let b = r.block(0, 1);
        assert_eq!(b[(1, 0)], r.matrix().get(1, 2));
        let rb = r.row_block(1);
        assert_eq!((rb.nrows(), rb.ncols()), (2, 4));
        assert_eq!(rb[(0, 3)], r.matrix().get(2, 3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn target_estimate_is_low_rank_and_scale_covariant(
            k in 1usize..5, m in 1usize..4, seed in any::<u64>(), scale in 0.1f64..10.0
        ) {
            let layout = Layout::new(k, m).unwrap();
            let x = random_frames(layout, 3 * k * m, seed, None);
            let v = random_frames(layout, 3 * k * m, seed ^ 1, None);
            let rx = sample_covariance(&x).unwrap();
            let rv = sample_covariance(&v).unwrap();
            let rd = estimate_target_covariance(&rx, &rv, k).unwrap();
            let ev = hermitian_eigenvalues(rd.matrix()).unwrap();
            let above = ev.iter().filter(|&&e| e > 1e-10 * ev[0].max(0.0)).count();
            prop_assert!(above <= k);

            let rd2 = estimate_target_covariance(&rx.scaled(scale), &rv.scaled(scale), k).unwrap();
            let expected = rd.scaled(scale);
            let err = frobenius_distance(rd2.matrix().as_ref(), expected.matrix().as_ref());
            prop_assert!(err <= 1e-10 * expected.matrix().frobenius_norm().max(1e-300));
        }

        #[test]
        fn phase_adjustment_with_hop_multiple_of_fft_is_identity(
            k in 1usize..5, m in 1usize..3, mult in 1usize..4, seed in any::<u64>()
        ) {
            let n = 8;
            let layout = Layout::new(k, m).unwrap();
            let fb = random_frames(layout, 4, seed, Some(meta(k, n * mult, n)));
            let plain = sample_covariance(&fb).unwrap();
            let adj = phase_adjusted_covariance(&fb).unwrap();
            let err = frobenius_distance(plain.matrix().as_ref(), adj.matrix().as_ref());
            prop_assert!(err <= 1e-14 * plain.matrix().frobenius_norm());
        }
    }
}
