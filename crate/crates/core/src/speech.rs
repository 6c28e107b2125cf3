//! Speech-in-noise experiment: reverberant target plus interferer, STFT
//! analysis, covariance estimation and scoring against the RIR-derived RTF.

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{phase_adjusted_covariance, sample_covariance, FrameBlock, FrameMeta, SpectralSpatialCovariance};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::metrics::{hermitian_angle_masked, rmse_db};
use crate::model::Layout;
use crate::rtf::{normalize_rtf, Method, Rtf};
use crate::scenario::stream_rng;
use crate::stft::{band_bins, convolve_rir, ground_truth_tf, stft, AudioClip, BandMask, StftConfig, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeechConfig {
    #[serde(alias = "M")]
    pub sensors: usize,
    /// Segment length in non-overlapping frames of `fft_size` samples.
    #[serde(alias = "L")]
    pub frames: usize,
    pub fft_size: usize,
    pub hop: usize,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// Interferer SNR; `inf` disables the interferer.
    pub snr_db: f64,
    pub mask_threshold_db: f64,
    pub silence_threshold_db: f64,
    pub noise_only_seconds: f64,
    pub sensor_noise_snr_db: f64,
    pub repetitions: usize,
    pub reference_sensor: usize,
    pub seed: u64,
}

impl Default for SpeechConfig {
    fn default() -> Self {
        Self {
            sensors: 4,
            frames: 5,
            fft_size: 1024,
            hop: 256,
            band_low_hz: 80.0,
            band_high_hz: 4000.0,
            snr_db: 0.0,
            mask_threshold_db: 35.0,
            silence_threshold_db: 40.0,
            noise_only_seconds: 2.0,
            sensor_noise_snr_db: 40.0,
            repetitions: 50,
            reference_sensor: 0,
            seed: 0,
        }
    }
}

impl SpeechConfig {
    pub fn stft(&self) -> StftConfig {
        StftConfig {
            fft_size: self.fft_size,
            hop: self.hop,
        }
    }

    pub fn segment_len(&self) -> usize {
        self.frames * self.fft_size
    }

    pub fn noise_only_len(&self) -> usize {
        (self.noise_only_seconds * SAMPLE_RATE as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.stft().validate()?;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.sensors == 0 || self.frames == 0 || self.repetitions == 0 {
            return bad("sensors, frames and repetitions must be positive".into());
        }
        if self.reference_sensor >= self.sensors {
            return bad(format!(
                "reference sensor {} out of range for {} sensors",
                self.reference_sensor, self.sensors
            ));
        }
        if !(self.band_low_hz >= 0.0 && self.band_low_hz < self.band_high_hz) {
            return bad("band limits must satisfy 0 <= low < high".into());
        }
        if self.snr_db.is_nan() || !self.sensor_noise_snr_db.is_finite() {
            return bad("snr_db must not be NaN and sensor_noise_snr_db must be finite".into());
        }
        if !(self.mask_threshold_db >= 0.0 && self.silence_threshold_db >= 0.0) {
            return bad("thresholds must be non-negative".into());
        }
        if self.noise_only_len() < self.fft_size {
            return bad("noise-only segment shorter than one frame".into());
        }
        Ok(())
    }
}

/// Dry mono sources and multichannel RIRs, all at 16 kHz.
#[derive(Debug, Clone)]
pub struct SpeechInputs {
    pub target: AudioClip,
    pub noise: AudioClip,
    pub target_rir: AudioClip,
    pub noise_rir: AudioClip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeechTrial {
    pub repetition: usize,
    pub method: Method,
    pub hermitian_angle: f64,
    pub rmse_db: f64,
}

/// Per-frame broadband energies on the hop grid: entry `j` covers
/// `[j hop, j hop + fft_size)`.
pub fn frame_energies(signal: &[f64], cfg: &StftConfig) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(signal.len() + 1);
    prefix.push(0.0);
    for &x in signal {
        prefix.push(prefix.last().unwrap() + x * x);
    }
    (0..cfg.frame_count(signal.len()))
        .map(|j| {
            let s = j * cfg.hop;
            (prefix[s + cfg.fft_size] - prefix[s]).max(0.0)
        })
        .collect()
}

/// Hop-grid frames whose energy is within `threshold_db` of the median
/// frame energy.
pub fn active_frames(signal: &[f64], cfg: &StftConfig, threshold_db: f64) -> Vec<bool> {
    let e = frame_energies(signal, cfg);
    if e.is_empty() {
        return Vec::new();
    }
    let mut sorted = e.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let floor = median * 10f64.powf(-threshold_db / 10.0);
    e.iter().map(|&x| x > 0.0 && x >= floor).collect()
}

/// Sample offsets (multiples of the hop) where a span of `len` samples fits
/// and every non-overlapping frame inside it is active.
pub fn segment_starts(active: &[bool], cfg: &StftConfig, signal_len: usize, len: usize) -> Vec<usize> {
    if len > signal_len {
        return Vec::new();
    }
    let stride = cfg.fft_size / cfg.hop;
    let blocks = len.div_ceil(cfg.fft_size);
    (0..=(signal_len - len) / cfg.hop)
        .filter(|&j| {
            (0..blocks).all(|i| {
                let idx = j + i * stride;
                // a last block that runs past the clip end is checked at the
                // final full frame
                active.get(idx).or(active.last()).copied().unwrap_or(false)
            })
        })
        .map(|j| j * cfg.hop)
        .collect()
}

struct Prepared {
    layout: Layout,
    bins: Vec<usize>,
    truth: Rtf,
    target_img: AudioClip,
    noise_img: AudioClip,
    target_starts: Vec<usize>,
    noise_starts: Vec<usize>,
    noise_only_starts: Vec<usize>,
    window_energy: f64,
}

fn prepare(inputs: &SpeechInputs, cfg: &SpeechConfig) -> Result<Prepared> {
    cfg.validate()?;
    for clip in [&inputs.target, &inputs.noise, &inputs.target_rir, &inputs.noise_rir] {
        clip.require_rate(SAMPLE_RATE)?;
    }
    for (name, rir) in [("target", &inputs.target_rir), ("noise", &inputs.noise_rir)] {
        if rir.n_channels() < cfg.sensors {
            return Err(Error::InvalidArgument(format!(
                "{name} RIR has {} channels, {} sensors requested",
                rir.n_channels(),
                cfg.sensors
            )));
        }
    }
    let st = cfg.stft();
    let bins = band_bins(&st, SAMPLE_RATE, cfg.band_low_hz, cfg.band_high_hz);
    if bins.is_empty() {
        return Err(Error::InvalidArgument("no STFT bins inside the band".into()));
    }
    let layout = Layout::new(bins.len(), cfg.sensors)?;
    let tf = ground_truth_tf(&inputs.target_rir, &st, cfg.sensors, &bins)?;
    let truth = normalize_rtf(&tf, cfg.reference_sensor)?;

    let take = |rir: &AudioClip| AudioClip {
        sample_rate: rir.sample_rate,
        channels: rir.channels[..cfg.sensors].to_vec(),
    };
    let target_img = convolve_rir(&inputs.target, &take(&inputs.target_rir), Some(cfg.fft_size))?;
    let noise_img = convolve_rir(&inputs.noise, &take(&inputs.noise_rir), None)?;

    let target_active = active_frames(&inputs.target.channels[0], &st, cfg.silence_threshold_db);
    let noise_active = active_frames(&inputs.noise.channels[0], &st, cfg.silence_threshold_db);
    let seg = cfg.segment_len();
    let target_starts = segment_starts(&target_active, &st, inputs.target.len(), seg);
    let noise_starts = segment_starts(&noise_active, &st, inputs.noise.len(), seg);
    let noise_only_starts = segment_starts(&noise_active, &st, inputs.noise.len(), cfg.noise_only_len());
    for (starts, needed, clip) in [
        (&target_starts, seg, &inputs.target),
        (&noise_starts, seg, &inputs.noise),
        (&noise_only_starts, cfg.noise_only_len(), &inputs.noise),
    ] {
        if starts.is_empty() {
            return Err(Error::InsufficientAudio {
                needed,
                available: clip.len(),
            });
        }
    }
    let window_energy = st.window().iter().map(|w| w * w).sum();
    Ok(Prepared {
        layout,
        bins,
        truth,
        target_img,
        noise_img,
        target_starts,
        noise_starts,
        noise_only_starts,
        window_energy,
    })
}

/// Stacked band-limited STFT frames (`KM x frames`) of a multichannel span.
fn stacked_stft(channels: &[&[f64]], st: &StftConfig, bins: &[usize]) -> Result<ComplexMatrix> {
    let spectra = channels
        .iter()
        .map(|x| stft(x, st))
        .collect::<Result<Vec<_>>>()?;
    let m = channels.len();
    let frames = spectra[0].ncols();
    Ok(Mat::from_fn(bins.len() * m, frames, |i, l| spectra[i % m][(bins[i / m], l)]))
}

fn power(x: &ComplexMatrix) -> f64 {
    let mut p = 0.0;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            p += x[(i, j)].norm_sqr();
        }
    }
    p
}

fn white_noise<R: Rng + ?Sized>(channels: usize, len: usize, std: f64, rng: &mut R) -> Vec<Vec<f64>> {
    (0..channels)
        .map(|_| {
            (0..len)
                .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                .collect()
        })
        .collect()
}

fn loaded(c: SpectralSpatialCovariance, delta: f64) -> Result<SpectralSpatialCovariance> {
    SpectralSpatialCovariance::new(c.layout(), c.matrix().add_diagonal(delta))
}

fn run_repetition(p: &Prepared, cfg: &SpeechConfig, methods: &[Method], rep: usize) -> Result<Vec<SpeechTrial>> {
    let st = cfg.stft();
    let mut rng = stream_rng(cfg.seed, rep as u64 + 1);
    let pick = |starts: &[usize], rng: &mut rand_chacha::ChaCha8Rng| starts[rng.random_range(0..starts.len())];
    let ts = pick(&p.target_starts, &mut rng);
    let ns = pick(&p.noise_starts, &mut rng);
    let vs = pick(&p.noise_only_starts, &mut rng);
    let seg = cfg.segment_len();
    let vlen = cfg.noise_only_len();
    let m = cfg.sensors;

    let t_span: Vec<&[f64]> = p.target_img.channels.iter().map(|c| &c[ts..ts + seg]).collect();
    let n_span: Vec<&[f64]> = p.noise_img.channels.iter().map(|c| &c[ns..ns + seg]).collect();
    let v_span: Vec<&[f64]> = p.noise_img.channels.iter().map(|c| &c[vs..vs + vlen]).collect();

    let t = stacked_stft(&t_span, &st, &p.bins)?;
    let n = stacked_stft(&n_span, &st, &p.bins)?;
    let v = stacked_stft(&v_span, &st, &p.bins)?;

    // interferer gain from the traces of the band-limited sample covariances
    let (pt, pn) = (power(&t) / t.ncols() as f64, power(&n) / n.ncols() as f64);
    let gain = if cfg.snr_db == f64::INFINITY || pn == 0.0 {
        0.0
    } else {
        (pt / (pn * 10f64.powf(cfg.snr_db / 10.0))).sqrt()
    };

    let target_var = t_span.iter().flat_map(|c| c.iter()).map(|x| x * x).sum::<f64>() / (m * seg) as f64;
    let sensor_var = target_var * 10f64.powf(-cfg.sensor_noise_snr_db / 10.0);
    let wx = white_noise(m, seg, sensor_var.sqrt(), &mut rng);
    let wv = white_noise(m, vlen, sensor_var.sqrt(), &mut rng);
    let wx = stacked_stft(&wx.iter().map(Vec::as_slice).collect::<Vec<_>>(), &st, &p.bins)?;
    let wv = stacked_stft(&wv.iter().map(Vec::as_slice).collect::<Vec<_>>(), &st, &p.bins)?;

    let x = Mat::from_fn(t.nrows(), t.ncols(), |i, l| t[(i, l)] + n[(i, l)] * gain + wx[(i, l)]);
    let v = Mat::from_fn(v.nrows(), v.ncols(), |i, l| v[(i, l)] * gain + wv[(i, l)]);

    let meta = FrameMeta {
        block_shift: cfg.hop,
        fft_size: cfg.fft_size,
        bin_indices: p.bins.clone(),
    };
    let xb = FrameBlock::new(p.layout, x, Some(meta.clone()))?;
    let vb = FrameBlock::new(p.layout, v, Some(meta))?;
    // expected sensor-noise power per STFT coefficient; keeps the
    // short-segment estimates invertible
    let delta = sensor_var * p.window_energy;

    let adjusted = if methods.iter().any(|m| m.uses_phase_adjustment()) {
        Some((
            loaded(phase_adjusted_covariance(&xb)?, delta)?,
            loaded(phase_adjusted_covariance(&vb)?, delta)?,
        ))
    } else {
        None
    };
    let plain = if methods.iter().any(|m| !m.uses_phase_adjustment()) {
        Some((
            loaded(sample_covariance(&xb)?, delta)?,
            loaded(sample_covariance(&vb)?, delta)?,
        ))
    } else {
        None
    };

    let power_per_bin: Vec<f64> = (0..p.bins.len())
        .map(|k| {
            let mut s = 0.0;
            for l in 0..t.ncols() {
                for i in p.layout.bin_range(k) {
                    s += t[(i, l)].norm_sqr();
                }
            }
            s
        })
        .collect();
    let mask = BandMask::from_power(p.bins.clone(), &power_per_bin, cfg.mask_threshold_db)?;
    let kept: Vec<usize> = (0..p.bins.len()).filter(|&k| mask.keep[k]).collect();
    let truth_kept = p.truth.select_bins(&kept)?;

    methods
        .iter()
        .map(|&method| {
            let (rx, rv) = if method.uses_phase_adjustment() {
                adjusted.as_ref()
            } else {
                plain.as_ref()
            }
            .expect("covariances computed for every requested method");
            let est = method.estimate(rx, rv, cfg.reference_sensor)?;
            Ok(SpeechTrial {
                repetition: rep,
                method,
                hermitian_angle: hermitian_angle_masked(&est, &p.truth, Some(&mask.keep))?,
                rmse_db: rmse_db(&est.select_bins(&kept)?, &truth_kept)?,
            })
        })
        .collect()
}

/// Runs `cfg.repetitions` independent repetitions (in parallel) and returns
/// one row per repetition and method, ordered by repetition then method.
pub fn run_speech_experiment(inputs: &SpeechInputs, cfg: &SpeechConfig, methods: &[Method]) -> Result<Vec<SpeechTrial>> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    let prepared = prepare(inputs, cfg)?;
    let per_rep = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| run_repetition(&prepared, cfg, methods, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

/// Synthetic material for smoke tests: a periodic, amplitude-modulated
/// harmonic source, a white-noise interferer and sparse decaying-impulse RIRs.
pub mod synthetic {
    use super::*;

    /// Harmonic source whose fundamental glides between `f0_low` and
    /// `f0_high` Hz (a slow intonation contour; constant when equal), with
    /// `1/h` harmonic amplitudes and a syllable-rate envelope.
    pub fn harmonic_source(f0_low: f64, f0_high: f64, seconds: f64, seed: u64) -> AudioClip {
        let mut rng = stream_rng(seed, 0);
        let fs = SAMPLE_RATE as f64;
        let n = (seconds * fs) as usize;
        let harmonics = ((0.5 * fs / f0_high.max(f0_low)) as usize).saturating_sub(1).max(1);
        let phases: Vec<f64> = (0..harmonics)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let (mid, half) = (0.5 * (f0_low + f0_high), 0.5 * (f0_high - f0_low));
        let contour_phase = rng.random_range(0.0..std::f64::consts::TAU);
        let mut cycles = 0.0;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                let f0 = mid + half * (std::f64::consts::TAU * 0.5 * t + contour_phase).sin();
                cycles += f0 / fs;
                let env = 0.6 + 0.4 * (std::f64::consts::TAU * 3.0 * t).sin();
                let s: f64 = phases
                    .iter()
                    .enumerate()
                    .map(|(h, ph)| {
                        let k = (h + 1) as f64;
                        (std::f64::consts::TAU * k * cycles + ph).cos() / k
                    })
                    .sum();
                0.1 * env * s
            })
            .collect();
        AudioClip::mono(SAMPLE_RATE, samples)
    }

    pub fn white_noise_source(seconds: f64, seed: u64) -> AudioClip {
        let mut rng = stream_rng(seed, 0);
        let n = (seconds * SAMPLE_RATE as f64) as usize;
        let samples = (0..n).map(|_| 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
        AudioClip::mono(SAMPLE_RATE, samples)
    }

    /// One direct-path impulse per sensor at the given delay, followed by a
    /// few decaying reflections; padded to `len` samples.
    pub fn impulse_rir(delays: &[usize], len: usize, seed: u64) -> AudioClip {
        let mut rng = stream_rng(seed, 0);
        let channels = delays
            .iter()
            .map(|&d| {
                let mut h = vec![0.0; len];
                h[d] = 1.0;
                for r in 1..=4 {
                    let pos = d + 7 * r + rng.random_range(0..5);
                    if pos < len {
                        h[pos] += 0.5f64.powi(r as i32) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                    }
                }
                h
            })
            .collect();
        AudioClip {
            sample_rate: SAMPLE_RATE,
            channels,
        }
    }

    /// Fundamental of the default target: 7 bins at `K2 = 1024`, so every
    /// harmonic sits on a bin centre but consecutive frames rotate harmonic
    /// pairs relative to each other.
    pub const DEFAULT_F0: f64 = 7.0 * SAMPLE_RATE as f64 / 1024.0;

    /// Periodic target, white interferer and impulse RIRs for `sensors` sensors.
    pub fn inputs(sensors: usize, seconds: f64, seed: u64) -> SpeechInputs {
        let target_delays: Vec<usize> = (0..sensors).map(|m| 2 + 3 * m).collect();
        let noise_delays: Vec<usize> = (0..sensors).map(|m| 2 + 5 * (sensors - 1 - m)).collect();
        SpeechInputs {
            target: harmonic_source(DEFAULT_F0, DEFAULT_F0, seconds, seed),
            noise: white_noise_source(seconds, seed + 1),
            target_rir: impulse_rir(&target_delays, 1024, seed + 2),
            noise_rir: impulse_rir(&noise_delays, 1024, seed + 3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SpeechConfig {
        SpeechConfig {
            sensors: 2,
            band_high_hz: 1000.0,
            noise_only_seconds: 0.5,
            repetitions: 3,
            ..SpeechConfig::default()
        }
    }

    #[test]
    fn silence_gate() {
        let st = StftConfig { fft_size: 8, hop: 2 };
        let mut x = vec![1.0; 40];
        for v in &mut x[16..28] {
            *v = 0.0;
        }
        let act = active_frames(&x, &st, 40.0);
        assert_eq!(act.len(), 17);
        // frames fully inside the silent stretch: starts 16, 18, 20
        assert_eq!(act.iter().filter(|a| !**a).count(), 3);
        assert_eq!(act, active_frames(&x, &st, 40.0));
        let starts = segment_starts(&act, &st, x.len(), 16);
        assert!(starts.contains(&0));
        assert!(!starts.contains(&10)); // would cover the frame at 18
        assert!(starts.iter().all(|s| s % 2 == 0 && s + 16 <= 40));
    }

    #[test]
    fn config_validation() {
        assert!(SpeechConfig::default().validate().is_ok());
        assert!(SpeechConfig { reference_sensor: 4, ..SpeechConfig::default() }.validate().is_err());
        assert!(SpeechConfig { hop: 300, ..SpeechConfig::default() }.validate().is_err());
        assert!(SpeechConfig { sensor_noise_snr_db: f64::INFINITY, ..SpeechConfig::default() }.validate().is_err());
    }

    #[test]
    fn rejects_wrong_rate_and_short_audio() {
        let mut inputs = synthetic::inputs(2, 1.0, 1);
        inputs.noise.sample_rate = 8_000;
        assert!(matches!(
            run_speech_experiment(&inputs, &small_cfg(), &[Method::Cw]),
            Err(Error::SampleRate { .. })
        ));
        let mut inputs = synthetic::inputs(2, 1.0, 1);
        inputs.noise.channels[0].truncate(3000);
        assert!(matches!(
            run_speech_experiment(&inputs, &small_cfg(), &[Method::Cw]),
            Err(Error::InsufficientAudio { .. })
        ));
        let inputs = synthetic::inputs(2, 1.0, 1);
        let cfg = SpeechConfig { sensors: 3, ..small_cfg() };
        assert!(run_speech_experiment(&inputs, &cfg, &[Method::Cw]).is_err());
    }

    #[test]
    fn single_sensor_is_trivial() {
        let inputs = synthetic::inputs(1, 1.0, 2);
        let cfg = SpeechConfig { sensors: 1, ..small_cfg() };
        let rows = run_speech_experiment(&inputs, &cfg, &Method::ALL).unwrap();
        assert_eq!(rows.len(), 3 * 4);
        for r in rows {
            assert_eq!(r.hermitian_angle, 0.0);
            assert_eq!(r.rmse_db, crate::metrics::DB_FLOOR);
        }
    }

    #[test]
    fn clean_target_is_recovered() {
        let inputs = synthetic::inputs(2, 1.5, 3);
        let cfg = SpeechConfig { snr_db: f64::INFINITY, ..small_cfg() };
        let rows = run_speech_experiment(&inputs, &cfg, &[Method::SvdDirect, Method::Cw]).unwrap();
        for r in rows {
            assert!(r.hermitian_angle < 0.05, "{r:?}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let inputs = synthetic::inputs(2, 1.0, 4);
        let a = run_speech_experiment(&inputs, &small_cfg(), &Method::ALL).unwrap();
        let b = run_speech_experiment(&inputs, &small_cfg(), &Method::ALL).unwrap();
        assert_eq!(a, b);
        let c = run_speech_experiment(&inputs, &SpeechConfig { seed: 9, ..small_cfg() }, &Method::ALL).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stft_frames_give_matching_diagonal_blocks() {
        let inputs = synthetic::inputs(2, 1.0, 5);
        let cfg = small_cfg();
        let p = prepare(&inputs, &cfg).unwrap();
        let span: Vec<&[f64]> = p.target_img.channels.iter().map(|c| &c[..cfg.segment_len()]).collect();
        let x = stacked_stft(&span, &cfg.stft(), &p.bins).unwrap();
        let meta = FrameMeta {
            block_shift: cfg.hop,
            fft_size: cfg.fft_size,
            bin_indices: p.bins.clone(),
        };
        let xb = FrameBlock::new(p.layout, x, Some(meta)).unwrap();
        let a = phase_adjusted_covariance(&xb).unwrap();
        let b = sample_covariance(&xb).unwrap();
        for k in 0..p.layout.bins {
            let (da, db) = (a.diagonal_block(k), b.diagonal_block(k));
            for i in 0..2 {
                for j in 0..2 {
                    let scale = db.get(i, i).re.max(db.get(j, j).re).max(1e-300);
                    assert!((da.get(i, j) - db.get(i, j)).norm() <= 1e-14 * scale);
                }
            }
        }
    }
}
