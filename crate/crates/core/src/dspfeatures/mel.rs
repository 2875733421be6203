use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// STFT and Mel filterbank settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureParams {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// Natural-log floor applied to every Mel energy.
    pub log_floor: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            n_fft: 1024,
            hop: 256,
            n_mels: 64,
            fmin: 30.0,
            fmax: 7600.0,
            log_floor: 1e-5f64.ln(),
        }
    }
}

impl FeatureParams {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.n_fft < 16 || self.n_fft > 1 << 16 || self.hop == 0 || self.n_mels == 0 {
            return Err(Error::invalid("bad STFT sizes"));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= sample_rate as f64 / 2.0) {
            return Err(Error::invalid("need 0 <= fmin < fmax <= Nyquist"));
        }
        if !self.log_floor.is_finite() {
            return Err(Error::invalid("log floor must be finite"));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.n_fft {
            0
        } else {
            (len - self.n_fft) / self.hop + 1
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequencies of the `n_mels` triangular filters.
pub fn mel_centers(params: &FeatureParams) -> Vec<f64> {
    mel_edges(params)[1..=params.n_mels].to_vec()
}

fn mel_edges(params: &FeatureParams) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(params.fmin), hz_to_mel(params.fmax));
    (0..params.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (params.n_mels + 1) as f64))
        .collect()
}

/// Log-Mel spectrogram, `frames × n_mels`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub frames: usize,
    pub n_mels: usize,
    pub data: Vec<f64>,
    pub params: FeatureParams,
}

impl MelSpectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    /// Temporal mean then temporal max of every Mel band, concatenated.
    pub fn pooled(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_mels];
        let mut max = vec![f64::NEG_INFINITY; self.n_mels];
        for t in 0..self.frames {
            for (j, &v) in self.frame(t).iter().enumerate() {
                mean[j] += v;
                max[j] = max[j].max(v);
            }
        }
        for m in mean.iter_mut() {
            *m /= self.frames.max(1) as f64;
        }
        mean.extend(max);
        mean
    }
}

/// Reusable STFT + filterbank state for one parameter set and sample rate.
pub struct MelFrontend {
    params: FeatureParams,
    sample_rate: u32,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    window_sum: f64,
    /// Per Mel band: (first bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFrontend {
    pub fn new(params: FeatureParams, sample_rate: u32) -> Result<Self> {
        params.validate(sample_rate)?;
        let n = params.n_fft;
        let window = hann(n);
        let window_sum = window.iter().sum();
        let edges = mel_edges(&params);
        let bin_hz = sample_rate as f64 / n as f64;
        let filters = (0..params.n_mels)
            .map(|m| {
                let (l, c, u) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut first = None;
                let mut w = Vec::new();
                for k in 0..params.n_bins() {
                    let f = k as f64 * bin_hz;
                    let v = if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < u {
                        (u - f) / (u - c)
                    } else {
                        0.0
                    };
                    if v > 0.0 {
                        first.get_or_insert(k);
                        w.push(v);
                    } else if first.is_some() {
                        break;
                    }
                }
                (first.unwrap_or(0), w)
            })
            .collect();
        Ok(Self {
            params,
            sample_rate,
            fft: FftPlanner::new().plan_fft_forward(n),
            window,
            window_sum,
            filters,
        })
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    /// Raw magnitude STFT, `frames × (n_fft/2 + 1)`. No edge padding.
    pub fn magnitude_stft(&self, samples: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.params.n_fft;
        if samples.len() < n {
            return Err(Error::invalid(format!(
                "audio of {} samples shorter than n_fft {n}",
                samples.len()
            )));
        }
        let frames = self.params.frame_count(samples.len());
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            let start = t * self.params.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(samples[start + i] * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            out.push(buf[..self.params.n_bins()].iter().map(|c| c.norm()).collect());
        }
        Ok(out)
    }

    pub fn mel_from_stft(&self, stft: &[Vec<f64>]) -> MelSpectrogram {
        let n_mels = self.params.n_mels;
        let mut data = Vec::with_capacity(stft.len() * n_mels);
        for frame in stft {
            for (first, w) in &self.filters {
                let e: f64 = w
                    .iter()
                    .zip(&frame[*first..])
                    .map(|(w, a)| w * a)
                    .sum::<f64>()
                    / self.window_sum;
                data.push(e.ln().max(self.params.log_floor));
            }
        }
        MelSpectrogram {
            frames: stft.len(),
            n_mels,
            data,
            params: self.params,
        }
    }

    pub fn mel(&self, audio: &AudioBuffer) -> Result<MelSpectrogram> {
        self.check_rate(audio)?;
        Ok(self.mel_from_stft(&self.magnitude_stft(&audio.samples)?))
    }

    pub(crate) fn check_rate(&self, audio: &AudioBuffer) -> Result<()> {
        if audio.sample_rate != self.sample_rate {
            return Err(Error::invalid(format!(
                "audio at {} Hz, frontend expects {} Hz",
                audio.sample_rate, self.sample_rate
            )));
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Magnitude STFT → triangular HTK Mel filterbank → natural log with floor.
pub fn mel_spectrogram(audio: &AudioBuffer, params: &FeatureParams) -> Result<MelSpectrogram> {
    MelFrontend::new(*params, audio.sample_rate)?.mel(audio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_formula() {
        let p = FeatureParams::default();
        assert_eq!(p.frame_count(1023), 0);
        assert_eq!(p.frame_count(1024), 1);
        assert_eq!(p.frame_count(1024 + 255), 1);
        assert_eq!(p.frame_count(1024 + 256), 2);
        let mel = mel_spectrogram(&AudioBuffer::silent(16_000, 16_000), &p).unwrap();
        assert_eq!(mel.frames, (16_000 - 1024) / 256 + 1);
        assert_eq!(mel.data.len(), mel.frames * 64);
    }

    #[test]
    fn silence_is_floor_exactly() {
        let p = FeatureParams::default();
        let mel = mel_spectrogram(&AudioBuffer::silent(4000, 16_000), &p).unwrap();
        assert!(mel.data.iter().all(|&v| v == p.log_floor));
    }

    #[test]
    fn too_short_is_invalid() {
        let p = FeatureParams::default();
        assert!(matches!(
            mel_spectrogram(&AudioBuffer::silent(1000, 16_000), &p),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn centers_strictly_increase() {
        let c = mel_centers(&FeatureParams::default());
        assert_eq!(c.len(), 64);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert!((hz_to_mel(mel_to_hz(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn every_filter_covers_a_bin() {
        let fe = MelFrontend::new(FeatureParams::default(), 16_000).unwrap();
        assert!(fe.filters.iter().all(|(_, w)| !w.is_empty()));
    }

    #[test]
    fn parseval_bound() {
        let p = FeatureParams::default();
        let fe = MelFrontend::new(p, 16_000).unwrap();
        let x: Vec<f64> = (0..4096).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let stft = fe.magnitude_stft(&x).unwrap();
        for (t, frame) in stft.iter().enumerate() {
            let seg = &x[t * p.hop..t * p.hop + p.n_fft];
            let energy: f64 = seg.iter().map(|v| v * v).sum();
            // one-sided spectrum: bins 1..N/2-1 stand for two
            let spec: f64 = frame
                .iter()
                .enumerate()
                .map(|(k, a)| if k == 0 || k == p.n_fft / 2 { a * a } else { 2.0 * a * a })
                .sum();
            assert!(spec <= p.n_fft as f64 * energy * (1.0 + 1e-12));
        }
    }
}
