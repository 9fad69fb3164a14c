//! Audio front-end: waveforms, WAV I/O and the MFCC feature pipeline.

mod mfcc;
mod wav;

pub use mfcc::{MfccConfig, MfccMatrix, MfccPipeline};
pub use wav::{read_wav, write_wav};

use crate::error::{CoreError, Result};

/// Default sample rate everywhere in the pipeline: with the encoder's 1/160
/// down-sampling this puts both feature streams on a 10 ms frame grid.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(CoreError::Config("sample rate must be positive".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
