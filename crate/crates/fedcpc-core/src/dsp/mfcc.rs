//! 20-dimensional MFCC front-end.
//!
//! Pipeline per frame: Hamming window (25 ms, 10 ms shift), power spectrum
//! (512-point FFT), 26 triangular mel filters spanning 0-8000 Hz, natural log
//! floored at 1e-10, DCT-II, keep coefficients 0..19. Per-utterance
//! mean-variance normalization is applied per coefficient at the end.
//!
//! Everything computes at `f64`; the public matrix casts to `f32` for the
//! classifiers. `MfccPipeline` exposes each stage so tests can compare
//! against a straight-line oracle and check the log-domain scale covariance.

use super::Waveform;
use crate::error::{CoreError, Result};
use crate::par::maybe_par_map_indexed;
use crate::tensor::Tensor;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub window_ms: u32,
    pub shift_ms: u32,
    pub fft_size: usize,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub log_floor: f64,
    pub normalize: bool,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: super::SAMPLE_RATE,
            window_ms: 25,
            shift_ms: 10,
            fft_size: 512,
            n_mels: 26,
            n_coeffs: 20,
            low_hz: 0.0,
            high_hz: 8000.0,
            log_floor: 1e-10,
            normalize: true,
        }
    }
}

impl MfccConfig {
    pub fn window_samples(&self) -> usize {
        (self.sample_rate as usize * self.window_ms as usize) / 1000
    }

    pub fn shift_samples(&self) -> usize {
        (self.sample_rate as usize * self.shift_ms as usize) / 1000
    }
}

/// Feature matrix: one row of `n_coeffs` coefficients per 10 ms frame.
#[derive(Debug, Clone)]
pub struct MfccMatrix {
    pub frames: Tensor<f32>,
    pub frame_shift_ms: u32,
    pub window_ms: u32,
}

impl MfccMatrix {
    pub fn n_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn n_coeffs(&self) -> usize {
        self.frames.shape()[1]
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10.0f64.powf(mel / 2595.0) - 1.0)
}

/// In-place radix-2 FFT (decimation in time); lengths must be powers of two.
fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // bit reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let (w_re, w_im) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut cur_re = 1.0;
            let mut cur_im = 0.0;
            for k in 0..len / 2 {
                let a = i + k;
                let b = i + k + len / 2;
                let t_re = re[b] * cur_re - im[b] * cur_im;
                let t_im = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
            i += len;
        }
        len <<= 1;
    }
}

/// MFCC extractor with precomputed window and filterbank.
pub struct MfccPipeline {
    cfg: MfccConfig,
    window: Vec<f64>,
    filterbank: Vec<Vec<f64>>,
}

impl MfccPipeline {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        if !cfg.fft_size.is_power_of_two() || cfg.fft_size < cfg.window_samples() {
            return Err(CoreError::Config(format!(
                "fft size {} must be a power of two covering the {}-sample window",
                cfg.fft_size,
                cfg.window_samples()
            )));
        }
        if cfg.n_coeffs > cfg.n_mels {
            return Err(CoreError::Config(format!(
                "{} coefficients from {} mel bands",
                cfg.n_coeffs, cfg.n_mels
            )));
        }
        let window = hamming(cfg.window_samples());
        let filterbank = build_filterbank(&cfg);
        Ok(Self { cfg, window, filterbank })
    }

    pub fn with_defaults() -> Self {
        Self::new(MfccConfig::default()).expect("default MFCC config is valid")
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    /// Triangular filters as rows over `fft_size / 2 + 1` bins.
    pub fn filterbank(&self) -> &[Vec<f64>] {
        &self.filterbank
    }

    fn check_len(&self, n_samples: usize) -> Result<()> {
        let w = self.cfg.window_samples();
        if n_samples < w {
            return Err(CoreError::InsufficientAudio(format!(
                "{n_samples} samples, need at least {w} (one {} ms window)",
                self.cfg.window_ms
            )));
        }
        Ok(())
    }

    /// Number of frames for an input length: `(len - window) / shift + 1`.
    pub fn frame_count(&self, n_samples: usize) -> Result<usize> {
        self.check_len(n_samples)?;
        Ok((n_samples - self.cfg.window_samples()) / self.cfg.shift_samples() + 1)
    }

    /// Hamming-windowed frames.
    pub fn windowed_frames(&self, samples: &[f32]) -> Result<Vec<Vec<f64>>> {
        let t = self.frame_count(samples.len())?;
        let w = self.cfg.window_samples();
        let hop = self.cfg.shift_samples();
        let mut frames = Vec::with_capacity(t);
        for fi in 0..t {
            let start = fi * hop;
            let frame: Vec<f64> = (0..w)
                .map(|i| f64::from(samples[start + i]) * self.window[i])
                .collect();
            frames.push(frame);
        }
        Ok(frames)
    }

    /// Power spectrum bins `0 ..= fft/2` of one windowed frame.
    pub fn power_spectrum(&self, frame: &[f64]) -> Vec<f64> {
        let n = self.cfg.fft_size;
        let mut re = vec![0.0; n];
        let mut im = vec![0.0; n];
        re[..frame.len().min(n)].copy_from_slice(&frame[..frame.len().min(n)]);
        fft_in_place(&mut re, &mut im);
        (0..=n / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
    }

    /// Mel-band energies (pre-log) per frame.
    pub fn mel_energies(&self, samples: &[f32]) -> Result<Vec<Vec<f64>>> {
        let frames = self.windowed_frames(samples)?;
        Ok(frames
            .iter()
            .map(|fr| {
                let ps = self.power_spectrum(fr);
                self.filterbank
                    .iter()
                    .map(|filt| {
                        let mut acc = 0.0;
                        for (&w, &p) in filt.iter().zip(&ps) {
                            acc += w * p;
                        }
                        acc
                    })
                    .collect()
            })
            .collect())
    }

    /// Floored natural-log mel energies per frame.
    pub fn log_mel_energies(&self, samples: &[f32]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .mel_energies(samples)?
            .into_iter()
            .map(|row| row.into_iter().map(|e| e.max(self.cfg.log_floor).ln()).collect())
            .collect())
    }

    /// DCT-II coefficients (0..n_coeffs) per frame, before normalization.
    pub fn raw_coefficients(&self, samples: &[f32]) -> Result<Vec<Vec<f64>>> {
        let n_mels = self.cfg.n_mels;
        let n_coeffs = self.cfg.n_coeffs;
        Ok(self
            .log_mel_energies(samples)?
            .into_iter()
            .map(|log_e| {
                (0..n_coeffs)
                    .map(|k| {
                        let mut acc = 0.0;
                        for (nidx, &v) in log_e.iter().enumerate() {
                            acc += v * (PI * (nidx as f64 + 0.5) * k as f64 / n_mels as f64).cos();
                        }
                        acc
                    })
                    .collect()
            })
            .collect())
    }

    /// Full pipeline at `f64`, including per-utterance mean-variance
    /// normalization per coefficient (unless disabled).
    pub fn compute_f64(&self, samples: &[f32]) -> Result<Vec<Vec<f64>>> {
        let mut coeffs = self.raw_coefficients(samples)?;
        if self.cfg.normalize {
            normalize_per_coefficient(&mut coeffs);
        }
        Ok(coeffs)
    }

    /// Full pipeline; output rows are `f32`.
    pub fn compute(&self, wave: &Waveform) -> Result<MfccMatrix> {
        if wave.sample_rate != self.cfg.sample_rate {
            return Err(CoreError::Config(format!(
                "waveform at {} Hz, pipeline expects {}",
                wave.sample_rate, self.cfg.sample_rate
            )));
        }
        let coeffs = self.compute_f64(&wave.samples)?;
        let t = coeffs.len();
        let d = self.cfg.n_coeffs;
        let mut data = Vec::with_capacity(t * d);
        for row in &coeffs {
            data.extend(row.iter().map(|&v| v as f32));
        }
        Ok(MfccMatrix {
            frames: Tensor::new(vec![t, d], data)?,
            frame_shift_ms: self.cfg.shift_ms,
            window_ms: self.cfg.window_ms,
        })
    }

    /// Batch featurization; parallel over utterances, index-ordered output.
    pub fn compute_batch(&self, waves: &[Waveform]) -> Result<Vec<MfccMatrix>> {
        let results = maybe_par_map_indexed(waves.len(), |i| self.compute(&waves[i]));
        results.into_iter().collect()
    }
}

/// Mean-variance normalization per column; constant columns become zero.
pub fn normalize_per_coefficient(rows: &mut [Vec<f64>]) {
    if rows.is_empty() {
        return;
    }
    let t = rows.len() as f64;
    let d = rows[0].len();
    for c in 0..d {
        let mut mean = 0.0;
        for r in rows.iter() {
            mean += r[c];
        }
        mean /= t;
        let mut var = 0.0;
        for r in rows.iter() {
            let dv = r[c] - mean;
            var += dv * dv;
        }
        var /= t;
        let sd = var.sqrt();
        let inv = if sd > 1e-12 { 1.0 / sd } else { 0.0 };
        for r in rows.iter_mut() {
            r[c] = (r[c] - mean) * inv;
        }
    }
}

fn hamming(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len as f64 - 1.0)).cos())
        .collect()
}

fn build_filterbank(cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let n_bins = cfg.fft_size / 2 + 1;
    let mel_low = hz_to_mel(cfg.low_hz);
    let mel_high = hz_to_mel(cfg.high_hz);
    let n_points = cfg.n_mels + 2;
    let bins: Vec<usize> = (0..n_points)
        .map(|i| {
            let mel = mel_low + (mel_high - mel_low) * i as f64 / (n_points - 1) as f64;
            let hz = mel_to_hz(mel);
            let bin = ((cfg.fft_size as f64 + 1.0) * hz / f64::from(cfg.sample_rate)).floor()
                as usize;
            bin.min(n_bins - 1)
        })
        .collect();
    let mut bank = Vec::with_capacity(cfg.n_mels);
    for m in 0..cfg.n_mels {
        let (left, center, right) = (bins[m], bins[m + 1], bins[m + 2]);
        let mut filt = vec![0.0; n_bins];
        if center > left {
            for k in left..=center {
                filt[k] = (k - left) as f64 / (center - left) as f64;
            }
        }
        if right > center {
            for k in center..=right {
                filt[k] = (right - k) as f64 / (right - center) as f64;
            }
        }
        // apex is exactly 1 even when a slope degenerates
        filt[center] = 1.0;
        bank.push(filt);
    }
    bank
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::Rng;

    fn tone(freq: f64, seconds: f64, amp: f32) -> Vec<f32> {
        let n = (seconds * 16000.0) as usize;
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / 16000.0).sin() as f32)
            .collect()
    }

    fn noise(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = derive_rng(seed, "mfcc_noise");
        (0..n).map(|_| rng.gen_range(-0.5f32..0.5)).collect()
    }

    #[test]
    fn six_seconds_gives_598_frames() {
        let p = MfccPipeline::with_defaults();
        assert_eq!(p.frame_count(96_000).unwrap(), 598);
    }

    #[test]
    fn exactly_one_window_gives_one_frame() {
        let p = MfccPipeline::with_defaults();
        assert_eq!(p.frame_count(400).unwrap(), 1);
        assert!(matches!(
            p.frame_count(399),
            Err(CoreError::InsufficientAudio(_))
        ));
    }

    #[test]
    fn constant_signal_gives_identical_windowed_frames() {
        let p = MfccPipeline::with_defaults();
        let samples = vec![0.25f32; 400 + 160 * 5];
        let frames = p.windowed_frames(&samples).unwrap();
        assert_eq!(frames.len(), 6);
        for f in &frames[1..] {
            assert_eq!(f, &frames[0]);
        }
    }

    #[test]
    fn frame_count_matches_closed_form_for_many_lengths() {
        let p = MfccPipeline::with_defaults();
        for len in (400..12_000).step_by(37) {
            let expect = (len - 400) / 160 + 1;
            assert_eq!(p.frame_count(len).unwrap(), expect, "len {len}");
        }
    }

    #[test]
    fn filters_are_nonnegative_and_peak_at_one() {
        let p = MfccPipeline::with_defaults();
        assert_eq!(p.filterbank().len(), 26);
        for (i, f) in p.filterbank().iter().enumerate() {
            assert_eq!(f.len(), 257);
            assert!(f.iter().all(|&v| v >= 0.0), "filter {i} has negative weight");
            let peak = f.iter().cloned().fold(0.0f64, f64::max);
            assert!((peak - 1.0).abs() < 1e-12, "filter {i} peaks at {peak}");
        }
    }

    #[test]
    fn one_khz_tone_peaks_in_bracketing_mel_filter() {
        // Locate the expected filter straight from the mel-scale formula: of
        // the two filters whose support brackets 1 kHz, the one with larger
        // triangular weight at mel(1000) must carry the most energy.
        let cfg = MfccConfig::default();
        let mel_lo = hz_to_mel(cfg.low_hz);
        let mel_hi = hz_to_mel(cfg.high_hz);
        let step = (mel_hi - mel_lo) / (cfg.n_mels + 1) as f64;
        let target = hz_to_mel(1000.0);
        let mut expected = 0usize;
        let mut best_w = -1.0f64;
        for m in 0..cfg.n_mels {
            let center = mel_lo + step * (m + 1) as f64;
            let w = 1.0 - (target - center).abs() / step;
            if w > best_w {
                best_w = w;
                expected = m;
            }
        }

        let p = MfccPipeline::with_defaults();
        let samples = tone(1000.0, 1.0, 0.7);
        let mel = p.mel_energies(&samples).unwrap();
        // average across frames before taking the argmax
        let mut sums = vec![0.0f64; cfg.n_mels];
        for row in &mel {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        let actual = sums
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(actual, expected, "energies {sums:?}");
    }

    #[test]
    fn digital_silence_yields_floor_logs_and_zero_higher_coefficients() {
        let p = MfccPipeline::with_defaults();
        let samples = vec![0.0f32; 16_000];
        for row in p.log_mel_energies(&samples).unwrap() {
            for v in row {
                assert!((v - 1e-10f64.ln()).abs() < 1e-12);
            }
        }
        for row in p.raw_coefficients(&samples).unwrap() {
            for &v in &row[1..] {
                assert!(v.abs() < 1e-9, "higher coefficient {v} not zero");
            }
        }
        // normalized output is all zeros (constant columns)
        for row in p.compute_f64(&samples).unwrap() {
            assert!(row.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn log_energies_shift_by_two_ln_alpha_under_scaling() {
        let p = MfccPipeline::with_defaults();
        let base = noise(4000, 11);
        let alpha = 1.7f32;
        let scaled: Vec<f32> = base.iter().map(|&v| v * alpha).collect();
        let a = p.log_mel_energies(&base).unwrap();
        let b = p.log_mel_energies(&scaled).unwrap();
        let shift = 2.0 * f64::from(alpha).ln();
        // tolerance absorbs the f32 quantization of the scaled input samples
        for (ra, rb) in a.iter().zip(&b) {
            for (&va, &vb) in ra.iter().zip(rb) {
                assert!((vb - va - shift).abs() < 1e-5, "{va} -> {vb}");
            }
        }
    }

    /// Straight-line reimplementation: direct O(n^2) DFT, mel triangles and
    /// DCT recomputed with plain loops. No code shared with the pipeline
    /// except the config values.
    fn oracle_mfcc(cfg: &MfccConfig, samples: &[f32]) -> Vec<Vec<f64>> {
        let win = cfg.window_samples();
        let hop = cfg.shift_samples();
        let t = (samples.len() - win) / hop + 1;
        let n_bins = cfg.fft_size / 2 + 1;
        // filter bank via bin indices
        let n_points = cfg.n_mels + 2;
        let mel_lo = 2595.0 * (1.0f64 + cfg.low_hz / 700.0).log10();
        let mel_hi = 2595.0 * (1.0f64 + cfg.high_hz / 700.0).log10();
        let mut bins = Vec::new();
        for i in 0..n_points {
            let mel = mel_lo + (mel_hi - mel_lo) * i as f64 / (n_points - 1) as f64;
            let hz = 700.0 * (10.0f64.powf(mel / 2595.0) - 1.0);
            let b = ((cfg.fft_size as f64 + 1.0) * hz / f64::from(cfg.sample_rate)).floor()
                as usize;
            bins.push(b.min(n_bins - 1));
        }
        let mut out = Vec::new();
        for fi in 0..t {
            // window
            let mut frame = vec![0.0f64; win];
            for i in 0..win {
                let w = 0.54 - 0.46 * (2.0 * PI * i as f64 / (win as f64 - 1.0)).cos();
                frame[i] = f64::from(samples[fi * hop + i]) * w;
            }
            // direct DFT power spectrum
            let mut power = vec![0.0f64; n_bins];
            for (k, p) in power.iter_mut().enumerate() {
                let mut re = 0.0;
                let mut im = 0.0;
                for (n, &x) in frame.iter().enumerate() {
                    let ang = 2.0 * PI * k as f64 * n as f64 / cfg.fft_size as f64;
                    re += x * ang.cos();
                    im -= x * ang.sin();
                }
                *p = re * re + im * im;
            }
            // mel energies, log, DCT
            let mut coeffs = vec![0.0f64; cfg.n_coeffs];
            let mut log_e = vec![0.0f64; cfg.n_mels];
            for m in 0..cfg.n_mels {
                let (l, c, r) = (bins[m], bins[m + 1], bins[m + 2]);
                let mut e = 0.0;
                for k in l..=r.min(n_bins - 1) {
                    let w = if k == c {
                        1.0
                    } else if k < c && c > l {
                        (k - l) as f64 / (c - l) as f64
                    } else if k > c && r > c {
                        (r - k) as f64 / (r - c) as f64
                    } else {
                        0.0
                    };
                    e += w * power[k];
                }
                log_e[m] = e.max(cfg.log_floor).ln();
            }
            for (k, cf) in coeffs.iter_mut().enumerate() {
                for (n, &v) in log_e.iter().enumerate() {
                    *cf += v * (PI * (n as f64 + 0.5) * k as f64 / cfg.n_mels as f64).cos();
                }
            }
            out.push(coeffs);
        }
        // mean-variance normalization
        let tt = out.len() as f64;
        for c in 0..cfg.n_coeffs {
            let mean: f64 = out.iter().map(|r| r[c]).sum::<f64>() / tt;
            let var: f64 = out.iter().map(|r| (r[c] - mean) * (r[c] - mean)).sum::<f64>() / tt;
            let sd = var.sqrt();
            let inv = if sd > 1e-12 { 1.0 / sd } else { 0.0 };
            for r in out.iter_mut() {
                r[c] = (r[c] - mean) * inv;
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_oracle_within_1e8() {
        let cfg = MfccConfig::default();
        let p = MfccPipeline::new(cfg.clone()).unwrap();
        // mixed tone + noise, ~0.08 s keeps the O(n^2) oracle fast
        let mut samples = noise(1280, 23);
        for (i, s) in samples.iter_mut().enumerate() {
            *s += 0.4 * ((2.0 * PI * 700.0 * i as f64 / 16000.0).sin() as f32);
        }
        let fast = p.compute_f64(&samples).unwrap();
        let slow = oracle_mfcc(&cfg, &samples);
        assert_eq!(fast.len(), slow.len());
        for (rf, rs) in fast.iter().zip(&slow) {
            for (&a, &b) in rf.iter().zip(rs) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn compute_produces_t_by_20_matrix() {
        let p = MfccPipeline::with_defaults();
        let wave = Waveform::new(noise(96_000, 5), 16_000).unwrap();
        let m = p.compute(&wave).unwrap();
        assert_eq!(m.frames.shape(), &[598, 20]);
        assert_eq!(m.frame_shift_ms, 10);
        assert_eq!(m.window_ms, 25);
    }
}
