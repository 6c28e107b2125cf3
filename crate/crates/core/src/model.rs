//! Stacked frequency-major indexing and transfer-function vectors.

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Shape of a stacked spectral-spatial vector: `bins` frequencies by
/// `sensors` microphones, entry `(k, m)` at `k * sensors + m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Layout {
    pub bins: usize,
    pub sensors: usize,
}

impl Layout {
    pub fn new(bins: usize, sensors: usize) -> Result<Self> {
        if bins == 0 || sensors == 0 {
            return Err(Error::InvalidArgument(format!(
                "layout needs at least one bin and one sensor (got K={bins}, M={sensors})"
            )));
        }
        Ok(Self { bins, sensors })
    }

    #[inline]
    pub fn index(&self, bin: usize, sensor: usize) -> usize {
        debug_assert!(bin < self.bins && sensor < self.sensors);
        bin * self.sensors + sensor
    }

    /// Inverse of [`Layout::index`].
    #[inline]
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.sensors, idx % self.sensors)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bins * self.sensors
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin_range(&self, bin: usize) -> std::ops::Range<usize> {
        bin * self.sensors..(bin + 1) * self.sensors
    }

    pub fn check_len(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }
}

/// Acoustic transfer function stacked over bins and sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub layout: Layout,
    pub values: Vec<C64>,
}

impl TransferFunction {
    pub fn new(layout: Layout, values: Vec<C64>) -> Result<Self> {
        layout.check_len(values.len())?;
        Ok(Self { layout, values })
    }

    pub fn bin(&self, k: usize) -> &[C64] {
        &self.values[self.layout.bin_range(k)]
    }

    pub fn get(&self, k: usize, m: usize) -> C64 {
        self.values[self.layout.index(k, m)]
    }

    /// Restricts to the given bins, in order.
    pub fn select_bins(&self, bins: &[usize]) -> Result<Self> {
        let layout = Layout::new(bins.len(), self.layout.sensors)?;
        let mut values = Vec::with_capacity(layout.len());
        for &k in bins {
            if k >= self.layout.bins {
                return Err(Error::InvalidArgument(format!("bin {k} out of range")));
            }
            values.extend_from_slice(self.bin(k));
        }
        Ok(Self { layout, values })
    }
}
