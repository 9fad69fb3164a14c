//! Mono 16-bit PCM WAV (RIFF, little-endian) reading and writing.

use super::Waveform;
use crate::error::{CoreError, Result};
use std::fs;
use std::io::Write;
use std::path::Path;

fn io_err(msg: impl Into<String>) -> CoreError {
    CoreError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into()))
}

/// Write samples as mono 16-bit PCM; values are clamped to `[-1, 1]`.
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let n = wave.samples.len();
    let data_bytes = (n * 2) as u32;
    let mut buf = Vec::with_capacity(44 + n * 2);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // PCM
    buf.extend_from_slice(&1u16.to_le_bytes()); // mono
    buf.extend_from_slice(&wave.sample_rate.to_le_bytes());
    buf.extend_from_slice(&(wave.sample_rate * 2).to_le_bytes()); // byte rate
    buf.extend_from_slice(&2u16.to_le_bytes()); // block align
    buf.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_bytes.to_le_bytes());
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Read a mono 16-bit PCM WAV file.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(io_err(format!("{}: not a RIFF/WAVE file", path.display())));
    }
    let mut sample_rate = 0u32;
    let mut bits = 0u16;
    let mut channels = 0u16;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes([bytes[pos + 4], bytes[pos + 5], bytes[pos + 6], bytes[pos + 7]])
            as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(io_err(format!("{}: truncated chunk", path.display())));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(io_err("fmt chunk too small"));
                }
                let fmt = u16::from_le_bytes([bytes[body_start], bytes[body_start + 1]]);
                if fmt != 1 {
                    return Err(io_err(format!("unsupported WAV format tag {fmt}, need PCM")));
                }
                channels = u16::from_le_bytes([bytes[body_start + 2], bytes[body_start + 3]]);
                sample_rate = u32::from_le_bytes([
                    bytes[body_start + 4],
                    bytes[body_start + 5],
                    bytes[body_start + 6],
                    bytes[body_start + 7],
                ]);
                bits = u16::from_le_bytes([bytes[body_start + 14], bytes[body_start + 15]]);
            }
            b"data" => data = Some(&bytes[body_start..body_start + size]),
            _ => {}
        }
        // chunks are word-aligned
        pos = body_start + size + (size & 1);
    }
    if channels != 1 || bits != 16 {
        return Err(io_err(format!(
            "{}: need mono 16-bit PCM, got {channels} channel(s) at {bits} bits",
            path.display()
        )));
    }
    let data = data.ok_or_else(|| io_err("missing data chunk"))?;
    // symmetric with the writer's 32767 scale so a decode/encode cycle is
    // byte-stable
    let samples: Vec<f32> = data
        .chunks_exact(2)
        .map(|c| (f32::from(i16::from_le_bytes([c[0], c[1]])) / 32767.0).clamp(-1.0, 1.0))
        .collect();
    Waveform::new(samples, sample_rate)
}
