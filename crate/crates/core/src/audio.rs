//! Mono audio buffers and 16-bit PCM WAV I/O.

use std::io::{Read, Seek, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Silence threshold on RMS, relative to full scale.
pub const SILENCE_RMS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn silent(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    /// Number of samples covering `seconds`, rounded up.
    pub fn len_for(seconds: f64, sample_rate: u32) -> usize {
        // guard against 0.1 * 16000 = 1600.0000000000002
        let exact = seconds * sample_rate as f64;
        let rounded = exact.round();
        if (exact - rounded).abs() < 1e-9 {
            rounded as usize
        } else {
            exact.ceil() as usize
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self::new(
            self.samples.iter().map(|x| x * gain).collect(),
            self.sample_rate,
        )
    }

    /// Writes 16-bit PCM mono.
    pub fn write_wav<W: Write + Seek>(&self, writer: W) -> Result<()> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::new(writer, spec)?;
        for &x in &self.samples {
            w.write_sample(quantize_i16(x))?;
        }
        w.finalize()?;
        Ok(())
    }

    pub fn to_wav_bytes(&self) -> Result<Vec<u8>> {
        let mut cursor = std::io::Cursor::new(Vec::new());
        self.write_wav(&mut cursor)?;
        Ok(cursor.into_inner())
    }

    pub fn save_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_wav_bytes()?)?;
        Ok(())
    }

    /// Reads a mono 16-bit PCM WAV file.
    pub fn read_wav<R: Read>(reader: R) -> Result<Self> {
        let r = hound::WavReader::new(reader)?;
        let spec = r.spec();
        if spec.channels != 1 {
            return Err(Error::format(format!(
                "expected mono wav, got {} channels",
                spec.channels
            )));
        }
        if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
            return Err(Error::format(format!(
                "expected 16-bit integer PCM, got {:?} {} bits",
                spec.sample_format, spec.bits_per_sample
            )));
        }
        if spec.sample_rate == 0 {
            return Err(Error::format("zero sample rate"));
        }
        let samples = r
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self::new(samples, spec.sample_rate))
    }

    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_wav(std::io::Cursor::new(bytes))
    }

    pub fn load_wav(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_wav_bytes(&bytes)
    }
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt()
}

fn quantize_i16(x: f64) -> i16 {
    (x.clamp(-1.0, 1.0) * 32768.0).round().min(32767.0) as i16
}
