//! WAV ingestion, FFT convolution and STFT analysis.

use std::path::Path;

use faer::Mat;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::model::{Layout, TransferFunction};

/// Sample rate required by the speech pipeline.
pub const SAMPLE_RATE: u32 = 16_000;

/// Multichannel real-valued audio, one vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl AudioClip {
    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Self {
        Self {
            sample_rate,
            channels: vec![samples],
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn require_rate(&self, expected: u32) -> Result<()> {
        if self.sample_rate != expected {
            return Err(Error::SampleRate {
                expected,
                found: self.sample_rate,
            });
        }
        Ok(())
    }
}

/// Reads PCM (8/16/24/32-bit) or 32-bit float WAV, scaled to `[-1, 1]`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch.max(1)); n_ch];
    for (i, v) in interleaved.into_iter().enumerate() {
        channels[i % n_ch].push(v);
    }
    Ok(AudioClip {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Writes 32-bit float WAV.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: clip.n_channels() as u16,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for i in 0..clip.len() {
        for ch in &clip.channels {
            writer.write_sample(ch[i] as f32)?;
        }
    }
    writer.finalize()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            hop: 256,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || self.hop == 0 || !self.fft_size.is_multiple_of(self.hop) {
            return Err(Error::InvalidArgument(format!(
                "hop {} must divide fft size {}",
                self.hop, self.fft_size
            )));
        }
        Ok(())
    }

    /// Number of non-negative frequency bins, `N/2 + 1`.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Periodic square-root Hann window.
    pub fn window(&self) -> Vec<f64> {
        let n = self.fft_size as f64;
        (0..self.fft_size)
            .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos()).sqrt())
            .collect()
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop + 1
        }
    }

    pub fn bin_frequency(&self, bin: usize, sample_rate: u32) -> f64 {
        bin as f64 * sample_rate as f64 / self.fft_size as f64
    }
}

/// Windowed DFT frames at hop `R`, non-negative bins only, as a `bins x L`
/// matrix. Frame `l` covers samples `[l R, l R + N)`.
pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<ComplexMatrix> {
    cfg.validate()?;
    let frames = cfg.frame_count(signal.len());
    if frames == 0 {
        return Err(Error::InsufficientAudio {
            needed: cfg.fft_size,
            available: signal.len(),
        });
    }
    let n = cfg.fft_size;
    let window = cfg.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut out = Mat::<C64>::zeros(cfg.bins(), frames);
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for l in 0..frames {
        let start = l * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = C64::new(signal[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..cfg.bins() {
            out[(k, l)] = buf[k];
        }
    }
    Ok(out)
}

/// Full linear convolution via FFT.
pub fn convolve(signal: &[f64], filter: &[f64]) -> Vec<f64> {
    if signal.is_empty() || filter.is_empty() {
        return Vec::new();
    }
    let out_len = signal.len() + filter.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |x: &[f64]| {
        let mut v: Vec<C64> = x.iter().map(|&s| C64::new(s, 0.0)).collect();
        v.resize(n, C64::new(0.0, 0.0));
        v
    };
    let mut a = pad(signal);
    let mut b = pad(filter);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    inv.process(&mut a);
    a[..out_len].iter().map(|z| z.re / n as f64).collect()
}

/// Convolves a mono source with each RIR channel, optionally truncating the
/// RIR first. The output keeps the source length.
pub fn convolve_rir(source: &AudioClip, rir: &AudioClip, truncate_to: Option<usize>) -> Result<AudioClip> {
    if source.n_channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "source must be mono (got {} channels)",
            source.n_channels()
        )));
    }
    if rir.sample_rate != source.sample_rate {
        return Err(Error::SampleRate {
            expected: source.sample_rate,
            found: rir.sample_rate,
        });
    }
    let s = &source.channels[0];
    let channels = rir
        .channels
        .iter()
        .map(|h| {
            let h = match truncate_to {
                Some(t) => &h[..t.min(h.len())],
                None => &h[..],
            };
            let mut y = convolve(s, h);
            y.truncate(s.len());
            y
        })
        .collect();
    Ok(AudioClip {
        sample_rate: source.sample_rate,
        channels,
    })
}

/// `N`-point DFT of the first `N` RIR samples per sensor, at the given bins,
/// stacked frequency-major.
pub fn ground_truth_tf(rir: &AudioClip, cfg: &StftConfig, sensors: usize, bins: &[usize]) -> Result<TransferFunction> {
    let n = cfg.fft_size;
    if rir.n_channels() < sensors {
        return Err(Error::InvalidArgument(format!(
            "RIR has {} channels, {sensors} sensors requested",
            rir.n_channels()
        )));
    }
    if rir.len() < n {
        return Err(Error::InsufficientAudio {
            needed: n,
            available: rir.len(),
        });
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let spectra: Vec<Vec<C64>> = rir.channels[..sensors]
        .iter()
        .map(|h| {
            let mut buf: Vec<C64> = h[..n].iter().map(|&v| C64::new(v, 0.0)).collect();
            fft.process(&mut buf);
            buf
        })
        .collect();
    let layout = Layout::new(bins.len(), sensors)?;
    let mut values = Vec::with_capacity(layout.len());
    for &b in bins {
        if b >= cfg.bins() {
            return Err(Error::InvalidArgument(format!("bin {b} out of range")));
        }
        for spec in &spectra {
            values.push(spec[b]);
        }
    }
    TransferFunction::new(layout, values)
}

/// Bins whose centre frequency lies in `[f_lo, f_hi]`.
pub fn band_bins(cfg: &StftConfig, sample_rate: u32, f_lo: f64, f_hi: f64) -> Vec<usize> {
    (0..cfg.bins())
        .filter(|&b| {
            let f = cfg.bin_frequency(b, sample_rate);
            f >= f_lo && f <= f_hi
        })
        .collect()
}

/// Per-bin mask over a band: true where the band bin's power is within
/// `threshold_db` of the loudest band bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMask {
    pub bins: Vec<usize>,
    pub keep: Vec<bool>,
}

impl BandMask {
    pub fn from_power(bins: Vec<usize>, power: &[f64], threshold_db: f64) -> Result<Self> {
        if power.len() != bins.len() {
            return Err(Error::DimensionMismatch {
                expected: bins.len(),
                got: power.len(),
            });
        }
        let max = power.iter().copied().fold(0.0, f64::max);
        let floor = max * 10f64.powf(-threshold_db / 10.0);
        let keep = power.iter().map(|&p| max > 0.0 && p >= floor).collect();
        Ok(Self { bins, keep })
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}
