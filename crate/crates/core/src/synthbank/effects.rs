//! Filter and effect units. All of them run in place over a buffer whose
//! internal state starts at zero.

use std::f64::consts::PI;

use super::patch::{Effect, EffectChain, Filter, FilterKind};

/// RBJ cookbook biquad, direct form I.
#[derive(Debug, Clone)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn new(filter: &Filter, sample_rate: f64) -> Option<Self> {
        let w0 = 2.0 * PI * filter.cutoff_hz.min(0.45 * sample_rate) / sample_rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * filter.resonance);
        let (b0, b1, b2) = match filter.kind {
            FilterKind::Lowpass => ((1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0),
            FilterKind::Highpass => ((1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0),
            FilterKind::None => return None,
        };
        let a0 = 1.0 + alpha;
        Some(Self {
            b: [b0 / a0, b1 / a0, b2 / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        })
    }

    fn run(&self, buf: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for s in buf.iter_mut() {
            let x = *s;
            let y = self.b[0] * x + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = x;
            y2 = y1;
            y1 = y;
            *s = y;
        }
    }
}

pub fn apply_filter(filter: &Filter, buf: &mut [f64], sample_rate: f64) {
    if let Some(bq) = Biquad::new(filter, sample_rate) {
        bq.run(buf);
    }
}

/// Seconds after the dry signal ends beyond which the chain's output is
/// treated as exactly zero.
pub fn tail_seconds(chain: &EffectChain) -> f64 {
    chain
        .iter()
        .map(|fx| match *fx {
            Effect::Reverb { decay, .. } => 1.5 * decay + 0.05,
            Effect::Delay { time, feedback, .. } => {
                let repeats = if feedback > 0.0 {
                    (1e-4f64.ln() / feedback.ln()).ceil().min(200.0)
                } else {
                    1.0
                };
                time * (repeats + 1.0)
            }
            Effect::Distortion { .. } => 0.0,
            Effect::Chorus { depth_ms, .. } => (CHORUS_BASE_MS + depth_ms) / 1000.0,
        })
        .sum()
}

pub fn apply_chain(chain: &EffectChain, buf: &mut [f64], sample_rate: f64) {
    for fx in chain.iter() {
        match *fx {
            Effect::Reverb { decay, wet } => reverb(buf, sample_rate, decay, wet),
            Effect::Delay {
                time,
                feedback,
                wet,
            } => delay(buf, sample_rate, time, feedback, wet),
            Effect::Distortion { drive } => distortion(buf, drive),
            Effect::Chorus { rate_hz, depth_ms } => chorus(buf, sample_rate, rate_hz, depth_ms),
        }
    }
}

const COMB_MS: [f64; 4] = [29.7, 37.1, 41.1, 43.7];
const ALLPASS_MS: [f64; 2] = [5.0, 1.7];
const ALLPASS_GAIN: f64 = 0.7;

/// Schroeder reverb: four parallel feedback combs into two series allpasses.
fn reverb(buf: &mut [f64], sample_rate: f64, decay: f64, wet: f64) {
    let n = buf.len();
    let mut wet_sig = vec![0.0; n];
    for ms in COMB_MS {
        let d = ((ms / 1000.0) * sample_rate).round().max(1.0) as usize;
        // -60 dB after `decay` seconds
        let g = 10f64.powf(-3.0 * (d as f64 / sample_rate) / decay);
        let mut line = vec![0.0; d];
        let mut pos = 0;
        for i in 0..n {
            let y = buf[i] + g * line[pos];
            line[pos] = y;
            pos = (pos + 1) % d;
            wet_sig[i] += 0.25 * y;
        }
    }
    for ms in ALLPASS_MS {
        let d = ((ms / 1000.0) * sample_rate).round().max(1.0) as usize;
        let mut line = vec![0.0; d];
        let mut pos = 0;
        for s in wet_sig.iter_mut() {
            let delayed = line[pos];
            let v = *s + ALLPASS_GAIN * delayed;
            *s = delayed - ALLPASS_GAIN * v;
            line[pos] = v;
            pos = (pos + 1) % d;
        }
    }
    for (s, w) in buf.iter_mut().zip(&wet_sig) {
        *s = (1.0 - wet) * *s + wet * w;
    }
}

fn delay(buf: &mut [f64], sample_rate: f64, time: f64, feedback: f64, wet: f64) {
    let d = (time * sample_rate).round().max(1.0) as usize;
    let mut line = vec![0.0; d];
    let mut pos = 0;
    for s in buf.iter_mut() {
        let delayed = line[pos];
        line[pos] = *s + feedback * delayed;
        pos = (pos + 1) % d;
        *s = (1.0 - wet) * *s + wet * delayed;
    }
}

fn distortion(buf: &mut [f64], drive: f64) {
    let norm = drive.tanh();
    for s in buf.iter_mut() {
        *s = (drive * *s).tanh() / norm;
    }
}

const CHORUS_BASE_MS: f64 = 10.0;

fn chorus(buf: &mut [f64], sample_rate: f64, rate_hz: f64, depth_ms: f64) {
    let dry = buf.to_vec();
    for (i, s) in buf.iter_mut().enumerate() {
        let t = i as f64 / sample_rate;
        let lfo = 0.5 * (1.0 + (2.0 * PI * rate_hz * t).sin());
        let delay = (CHORUS_BASE_MS + depth_ms * lfo) / 1000.0 * sample_rate;
        let pos = i as f64 - delay;
        let tap = if pos < 0.0 {
            0.0
        } else {
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            let a = dry[k];
            let b = if k + 1 < dry.len() { dry[k + 1] } else { 0.0 };
            a + frac * (b - a)
        };
        *s = 0.5 * dry[i] + 0.5 * tap;
    }
}
