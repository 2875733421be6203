use serde::{Deserialize, Serialize};

use super::mel::MelFrontend;
use crate::audio::{AudioBuffer, SILENCE_RMS};
use crate::error::{Error, Result};

pub const DESCRIPTOR_DIM: usize = 12;

pub const DESCRIPTOR_NAMES: [&str; DESCRIPTOR_DIM] = [
    "spectral_centroid",
    "spectral_spread",
    "spectral_skewness",
    "spectral_kurtosis",
    "spectral_flatness",
    "spectral_crest",
    "spectral_rolloff_85",
    "spectral_flux",
    "zero_crossing_rate",
    "log_attack_time",
    "temporal_centroid",
    "spectral_decrease",
];

/// Fixed-order timbre descriptors. Nothing here depends on signal level:
/// spectral descriptors use per-frame normalized spectra and energy-share
/// frame weights, temporal ones the max-normalized energy envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorVector(pub [f64; DESCRIPTOR_DIM]);

impl DescriptorVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Frames below this fraction of the loudest frame's energy are skipped.
const FRAME_GATE: f64 = 1e-10;
const ZCR_DEAD_ZONE: f64 = 1e-10;
const FLATNESS_EPS: f64 = 1e-20;

/// Onset thresholds of the attack on the normalized energy envelope.
const ATTACK_START: f64 = 0.2;
const ATTACK_END: f64 = 0.9;

pub fn timbre_descriptors(audio: &AudioBuffer) -> Result<DescriptorVector> {
    let fe = MelFrontend::new(Default::default(), audio.sample_rate)?;
    let stft = fe.magnitude_stft(&audio.samples)?;
    descriptors_from_stft(&fe, audio, &stft)
}

pub(crate) fn descriptors_from_stft(
    fe: &MelFrontend,
    audio: &AudioBuffer,
    stft: &[Vec<f64>],
) -> Result<DescriptorVector> {
    let rms = audio.rms();
    if rms < SILENCE_RMS {
        return Err(Error::SilentInput { rms });
    }
    let params = fe.params();
    let sr = audio.sample_rate as f64;
    let bin_hz = sr / params.n_fft as f64;
    let n_bins = params.n_bins();

    let energies: Vec<f64> = stft
        .iter()
        .map(|f| f.iter().map(|a| a * a).sum())
        .collect();
    let max_e = energies.iter().cloned().fold(0.0, f64::max);
    let kept: Vec<usize> = (0..stft.len())
        .filter(|&t| max_e > 0.0 && energies[t] > FRAME_GATE * max_e)
        .collect();
    if kept.is_empty() {
        return Err(Error::SilentInput { rms });
    }
    let total_e: f64 = kept.iter().map(|&t| energies[t]).sum();

    let mut acc = [0.0; 8];
    let mut flux_acc = 0.0;
    let mut flux_w = 0.0;
    let mut prev: Option<(usize, Vec<f64>)> = None;
    for &t in &kept {
        let a = &stft[t];
        let w = energies[t] / total_e;
        let sum_a: f64 = a.iter().sum();
        let p: Vec<f64> = a.iter().map(|x| x / sum_a).collect();
        let q: Vec<f64> = a.iter().map(|x| x * x / energies[t]).collect();

        let centroid: f64 = p.iter().enumerate().map(|(k, p)| k as f64 * bin_hz * p).sum();
        let m2: f64 = moment(&p, centroid, bin_hz, 2);
        let spread = m2.sqrt();
        let (skew, kurt) = if spread > 1e-12 {
            (
                moment(&p, centroid, bin_hz, 3) / spread.powi(3),
                moment(&p, centroid, bin_hz, 4) / (m2 * m2),
            )
        } else {
            (0.0, 0.0)
        };
        let log_mean = q.iter().map(|v| (v + FLATNESS_EPS).ln()).sum::<f64>() / n_bins as f64;
        let flatness = log_mean.exp() / (1.0 / n_bins as f64);
        let crest = p.iter().cloned().fold(0.0, f64::max) * n_bins as f64;
        let mut cum = 0.0;
        let mut rolloff = (n_bins - 1) as f64 * bin_hz;
        for (k, v) in q.iter().enumerate() {
            cum += v;
            if cum >= 0.85 {
                rolloff = k as f64 * bin_hz;
                break;
            }
        }
        let tail: f64 = p[1..].iter().sum();
        let decrease = if tail > 0.0 {
            p[1..]
                .iter()
                .enumerate()
                .map(|(k, v)| (v - p[0]) / (k + 1) as f64)
                .sum::<f64>()
                / tail
        } else {
            0.0
        };
        for (slot, v) in acc
            .iter_mut()
            .zip([centroid, spread, skew, kurt, flatness, crest, rolloff, decrease])
        {
            *slot += w * v;
        }
        if let Some((pt, pp)) = &prev {
            if *pt + 1 == t {
                let d: f64 = p.iter().zip(pp).map(|(a, b)| (a - b) * (a - b)).sum();
                flux_acc += w * d.sqrt();
                flux_w += w;
            }
        }
        prev = Some((t, p));
    }
    let flux = if flux_w > 0.0 { flux_acc / flux_w } else { 0.0 };

    let xs = &audio.samples;
    // Samples 200 dB below the peak count as zero: rescaling pushes
    // subnormal tails to zero differently for different gains.
    let dead = audio.peak() * ZCR_DEAD_ZONE;
    let sign = |x: f64| if x > dead { 1 } else if x < -dead { -1 } else { 0 };
    let crossings = xs
        .windows(2)
        .filter(|w| sign(w[0]) * sign(w[1]) < 0)
        .count();
    let zcr = crossings as f64 / (xs.len() - 1).max(1) as f64;

    let (lat, tc) = temporal(xs, params.hop, sr);

    Ok(DescriptorVector([
        acc[0], acc[1], acc[2], acc[3], acc[4], acc[5], acc[6], flux, zcr, lat, tc, acc[7],
    ]))
}

fn moment(p: &[f64], centroid: f64, bin_hz: f64, order: i32) -> f64 {
    p.iter()
        .enumerate()
        .map(|(k, p)| (k as f64 * bin_hz - centroid).powi(order) * p)
        .sum()
}

/// Energy envelope over non-overlapping hop-sized blocks.
pub fn energy_envelope(xs: &[f64], hop: usize) -> Vec<f64> {
    xs.chunks(hop)
        .map(|c| c.iter().map(|x| x * x).sum())
        .collect()
}

/// (natural-log attack time in seconds, temporal centroid in seconds).
fn temporal(xs: &[f64], hop: usize, sr: f64) -> (f64, f64) {
    let env = energy_envelope(xs, hop);
    let max = env.iter().cloned().fold(0.0, f64::max);
    let norm: Vec<f64> = env.iter().map(|e| e / max).collect();
    let start = norm.iter().position(|&e| e >= ATTACK_START).unwrap_or(0);
    let end = norm[start..]
        .iter()
        .position(|&e| e >= ATTACK_END)
        .map(|i| i + start)
        .unwrap_or(start);
    let dt = (end - start) as f64 * hop as f64 / sr;
    let lat = dt.max(1.0 / sr).ln();
    let total: f64 = norm.iter().sum();
    let tc = norm
        .iter()
        .enumerate()
        .map(|(j, e)| (j as f64 + 0.5) * hop as f64 / sr * e)
        .sum::<f64>()
        / total;
    (lat, tc)
}
