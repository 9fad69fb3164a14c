//! Utterance synthesis and signal measurements.
//!
//! A synthetic utterance alternates voiced stretches and Poisson-arriving
//! pauses. The voiced part is a phase-locked harmonic stack on a random-walk
//! pitch contour, amplitude-modulated at the syllable rate and spectrally
//! shaped by the speaker's formant shift. White noise sits 30 dB under the
//! voiced RMS and is gated a further 20 dB down inside pauses so silences
//! stay well below 1% of the voiced level.

use super::{ClassProfile, SpeakerProfile};
use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::error::{CoreError, Result};
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use std::f64::consts::PI;

const HARMONICS: usize = 8;
const PAUSE_MIN_S: f64 = 0.15;
const PAUSE_MAX_S: f64 = 0.45;
const RAMP_S: f64 = 0.010;
const VOICED_SNR_DB: f64 = 30.0;
const SILENCE_NOISE_GAIN: f64 = 0.1;
const PEAK_TARGET: f64 = 0.9;

fn normal(mean: f64, sd: f64, rng: &mut impl Rng) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("sd checked positive").sample(rng)
}

/// Synthesize one utterance of at least 6 seconds.
pub fn synth_utterance(
    speaker: &SpeakerProfile,
    profile: &ClassProfile,
    duration_s: f64,
    rng: &mut impl Rng,
) -> Result<Waveform> {
    if duration_s < 6.0 {
        return Err(CoreError::Config(format!(
            "utterances are at least 6 s, asked for {duration_s}"
        )));
    }
    let fs = f64::from(SAMPLE_RATE);
    let n = (duration_s * fs).round() as usize;

    // class parameters realized per utterance
    let pause_rate = normal(profile.pause_rate.0, profile.pause_rate.1, rng).max(0.0);
    let pitch_sd = normal(profile.pitch_var.0, profile.pitch_var.1, rng).max(0.0);
    let syllable_rate = normal(profile.syllable_rate.0, profile.syllable_rate.1, rng).clamp(0.8, 10.0);

    // pause schedule: exponential gaps between pause onsets
    let mut pauses: Vec<(f64, f64)> = Vec::new();
    if pause_rate > 1e-9 {
        let gap = Exp::new(pause_rate).expect("positive rate");
        let mut t = gap.sample(rng);
        while t < duration_s {
            let dur = rng.gen_range(PAUSE_MIN_S..PAUSE_MAX_S);
            pauses.push((t, (t + dur).min(duration_s)));
            t += dur + gap.sample(rng);
        }
    }

    // voicing gate with cosine ramps at pause boundaries
    let mut gate = vec![1.0f64; n];
    let ramp = (RAMP_S * fs) as usize;
    for &(start, end) in &pauses {
        let a = (start * fs) as usize;
        let b = (end * fs) as usize;
        for i in a..b.min(n) {
            gate[i] = 0.0;
        }
        for k in 0..ramp {
            let w = 0.5 * (1.0 + (PI * k as f64 / ramp as f64).cos());
            if a >= k + 1 {
                let i = a - k - 1;
                gate[i] = gate[i].min(1.0 - w);
            }
            let j = b + k;
            if j < n {
                gate[j] = gate[j].max(1.0 - w).min(gate_after(b, j, n, &pauses, fs));
            }
        }
    }

    // pitch contour: discrete OU random walk per 10 ms step, stationary sd =
    // pitch_sd semitones
    let steps = n / 160 + 2;
    let mut contour = vec![0.0f64; steps];
    let ou_a = 0.98f64;
    let ou_b = pitch_sd * (1.0 - ou_a * ou_a).sqrt();
    contour[0] = normal(0.0, pitch_sd, rng);
    for i in 1..steps {
        contour[i] = ou_a * contour[i - 1] + normal(0.0, ou_b, rng);
    }

    // harmonic amplitudes: 1/k^3 rolloff with a formant-shaped bump
    let formant_hz = 550.0 * speaker.formant_shift;
    let amps: Vec<f64> = (1..=HARMONICS)
        .map(|k| {
            let f = speaker.base_f0 * k as f64;
            if f > 7600.0 {
                return 0.0;
            }
            let bump = 1.0 + 0.8 * (-((f - formant_hz) / 350.0).powi(2)).exp();
            bump / (k as f64).powi(3)
        })
        .collect();

    let am_phase = rng.gen_range(0.0..2.0 * PI);
    let mut voiced = vec![0.0f64; n];
    let mut phase = 0.0f64;
    for (i, v) in voiced.iter_mut().enumerate() {
        let step = i / 160;
        let frac = (i % 160) as f64 / 160.0;
        let semi = contour[step] * (1.0 - frac) + contour[step + 1] * frac;
        let f0 = speaker.base_f0 * (2.0f64).powf(semi / 12.0);
        phase += 2.0 * PI * f0 / fs;
        let mut s = 0.0;
        for (k, &a) in amps.iter().enumerate() {
            if a > 0.0 {
                s += a * ((k + 1) as f64 * phase).sin();
            }
        }
        let env = 0.65 + 0.35 * (2.0 * PI * syllable_rate * i as f64 / fs + am_phase).sin();
        *v = s * env * gate[i];
    }

    // noise: 30 dB under voiced RMS, a further 20 dB down inside pauses
    let voiced_samples: Vec<f64> = voiced
        .iter()
        .zip(&gate)
        .filter(|(_, &g)| g > 0.5)
        .map(|(&v, _)| v)
        .collect();
    let voiced_rms = rms(&voiced_samples).max(1e-6);
    let noise_sigma = voiced_rms * 10f64.powf(-VOICED_SNR_DB / 20.0);
    let mut out = vec![0.0f64; n];
    for i in 0..n {
        let local = noise_sigma * (SILENCE_NOISE_GAIN + (1.0 - SILENCE_NOISE_GAIN) * gate[i]);
        out[i] = voiced[i] + normal(0.0, 1.0, rng) * local;
    }

    // peak-normalize to 0.9
    let peak = out.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1e-9);
    let scale = PEAK_TARGET / peak;
    let samples: Vec<f32> = out.iter().map(|&v| (v * scale) as f32).collect();
    Waveform::new(samples, SAMPLE_RATE)
}

/// Keeps the re-opening ramp from leaking into an immediately following pause.
fn gate_after(b: usize, j: usize, _n: usize, pauses: &[(f64, f64)], fs: f64) -> f64 {
    for &(start, end) in pauses {
        let a = (start * fs) as usize;
        let e = (end * fs) as usize;
        if j >= a && j < e && a > b {
            return 0.0;
        }
    }
    1.0
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn frame_rms(samples: &[f32], frame: usize) -> Vec<f64> {
    samples
        .chunks(frame)
        .map(|c| rms(&c.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>()))
        .collect()
}

/// Fraction of 10 ms frames below an absolute silence threshold.
pub fn pause_fraction(wave: &Waveform) -> f64 {
    let frames = frame_rms(&wave.samples, 160);
    if frames.is_empty() {
        return 0.0;
    }
    let silent = frames.iter().filter(|&&r| r < 0.02).count();
    silent as f64 / frames.len() as f64
}

/// Syllable-rate estimate: upward mean-crossings of the voiced-frame energy
/// envelope per voiced second.
pub fn estimated_syllable_rate(wave: &Waveform) -> f64 {
    let env = frame_rms(&wave.samples, 160);
    let voiced: Vec<f64> = env.iter().copied().filter(|&r| r >= 0.02).collect();
    if voiced.len() < 4 {
        return 0.0;
    }
    let mean = voiced.iter().sum::<f64>() / voiced.len() as f64;
    let mut crossings = 0usize;
    let mut voiced_frames = 0usize;
    let mut prev: Option<f64> = None;
    for &r in &env {
        if r < 0.02 {
            prev = None;
            continue;
        }
        voiced_frames += 1;
        if let Some(p) = prev {
            if p < mean && r >= mean {
                crossings += 1;
            }
        }
        prev = Some(r);
    }
    crossings as f64 / (voiced_frames as f64 * 0.010)
}

/// F0 estimate from hysteresis zero crossings (Schmitt trigger at +-5% of
/// peak): upward transitions per second.
pub fn zero_crossing_f0(wave: &Waveform) -> f64 {
    let peak = wave.samples.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
    let h = 0.05 * peak;
    let mut high = false;
    let mut ups = 0usize;
    for &s in &wave.samples {
        if high && s < -h {
            high = false;
        } else if !high && s > h {
            high = true;
            ups += 1;
        }
    }
    (ups.max(1) - 1) as f64 / wave.duration_seconds()
}

/// The two probe features used to verify label learnability.
#[derive(Debug, Clone, Copy)]
pub struct UtteranceFeatures {
    pub pause_fraction: f64,
    pub syllable_rate: f64,
}

pub fn measure(wave: &Waveform) -> UtteranceFeatures {
    UtteranceFeatures {
        pause_fraction: pause_fraction(wave),
        syllable_rate: estimated_syllable_rate(wave),
    }
}

/// Nearest-centroid classification on (pause fraction, syllable rate):
/// standardize both features on the training items, fit per-class centroids,
/// and report accuracy on the evaluation items.
pub fn two_feature_probe_accuracy(
    train: &[(UtteranceFeatures, usize)],
    eval: &[(UtteranceFeatures, usize)],
) -> f64 {
    let as_vec = |f: &UtteranceFeatures| [f.pause_fraction, f.syllable_rate];
    let mut mean = [0.0f64; 2];
    for (f, _) in train {
        let v = as_vec(f);
        mean[0] += v[0];
        mean[1] += v[1];
    }
    mean[0] /= train.len() as f64;
    mean[1] /= train.len() as f64;
    let mut var = [0.0f64; 2];
    for (f, _) in train {
        let v = as_vec(f);
        var[0] += (v[0] - mean[0]).powi(2);
        var[1] += (v[1] - mean[1]).powi(2);
    }
    let sd = [
        (var[0] / train.len() as f64).sqrt().max(1e-9),
        (var[1] / train.len() as f64).sqrt().max(1e-9),
    ];
    let norm = |f: &UtteranceFeatures| {
        let v = as_vec(f);
        [(v[0] - mean[0]) / sd[0], (v[1] - mean[1]) / sd[1]]
    };
    let mut centroids = [[0.0f64; 2]; 3];
    let mut counts = [0usize; 3];
    for (f, label) in train {
        let v = norm(f);
        centroids[*label][0] += v[0];
        centroids[*label][1] += v[1];
        counts[*label] += 1;
    }
    for (c, n) in centroids.iter_mut().zip(counts) {
        if n > 0 {
            c[0] /= n as f64;
            c[1] /= n as f64;
        }
    }
    let mut correct = 0usize;
    for (f, label) in eval {
        let v = norm(f);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (ci, c) in centroids.iter().enumerate() {
            let d = (v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = ci;
            }
        }
        correct += usize::from(best == *label);
    }
    correct as f64 / eval.len() as f64
}
