use serde::{Deserialize, Serialize};

use super::Family;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Sine,
    Saw,
    Square,
    Triangle,
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    pub waveform: Waveform,
    /// Relative amplitude in [0, 1].
    pub amplitude: f64,
    pub detune_cents: f64,
}

/// Linear ADSR. Times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub attack: f64,
    pub decay: f64,
    pub sustain: f64,
    pub release: f64,
}

impl Envelope {
    /// Level while the gate is held, `t` seconds after note-on.
    pub fn held_level(&self, t: f64) -> f64 {
        if t < self.attack {
            t / self.attack
        } else if t < self.attack + self.decay {
            1.0 - (1.0 - self.sustain) * (t - self.attack) / self.decay
        } else {
            self.sustain
        }
    }

    /// Level `t` seconds after note-on for a gate of length `gate`.
    pub fn level(&self, t: f64, gate: f64) -> f64 {
        if t < gate {
            return self.held_level(t);
        }
        let r = t - gate;
        if r >= self.release {
            return 0.0;
        }
        self.held_level(gate) * (1.0 - r / self.release)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Lowpass,
    Highpass,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub kind: FilterKind,
    pub cutoff_hz: f64,
    /// Biquad Q.
    pub resonance: f64,
}

impl Filter {
    pub const BYPASS: Filter = Filter {
        kind: FilterKind::None,
        cutoff_hz: 1000.0,
        resonance: std::f64::consts::FRAC_1_SQRT_2,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Effect {
    Reverb { decay: f64, wet: f64 },
    Delay { time: f64, feedback: f64, wet: f64 },
    Distortion { drive: f64 },
    Chorus { rate_hz: f64, depth_ms: f64 },
}

impl Effect {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Effect::Reverb { decay, wet } => decay > 0.0 && (0.0..=1.0).contains(&wet),
            Effect::Delay {
                time,
                feedback,
                wet,
            } => time > 0.0 && (0.0..1.0).contains(&feedback) && (0.0..=1.0).contains(&wet),
            Effect::Distortion { drive } => drive > 0.0 && drive.is_finite(),
            Effect::Chorus { rate_hz, depth_ms } => {
                rate_hz > 0.0 && rate_hz.is_finite() && (0.0..=50.0).contains(&depth_ms)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("effect parameters out of range: {self:?}")))
        }
    }
}

/// Ordered effect units, possibly empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EffectChain(pub Vec<Effect>);

impl EffectChain {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Effect> {
        self.0.iter()
    }
}

/// Exponentially decaying pitch offset, used by percussion bodies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchSweep {
    pub depth_semitones: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentPatch {
    pub id: u32,
    pub family: Family,
    pub oscillators: Vec<Oscillator>,
    pub envelope: Envelope,
    pub filter: Filter,
    pub effects: EffectChain,
    #[serde(default)]
    pub pitch_sweep: Option<PitchSweep>,
    pub master_gain: f64,
    pub seed: u64,
    /// Set on effect-stripped copies: the id of the original patch.
    #[serde(default)]
    pub augmented_from: Option<u32>,
}

impl InstrumentPatch {
    pub fn is_augmented(&self) -> bool {
        self.augmented_from.is_some()
    }

    /// Id of the original patch this one derives from (itself if original).
    pub fn root_id(&self) -> u32 {
        self.augmented_from.unwrap_or(self.id)
    }

    pub fn has_noise(&self) -> bool {
        self.oscillators
            .iter()
            .any(|o| o.waveform == Waveform::Noise && o.amplitude > 0.0)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let bad = |what: &str| Err(Error::invalid(format!("patch {}: {what}", self.id)));
        if self.oscillators.is_empty() {
            return bad("needs at least one oscillator");
        }
        for o in &self.oscillators {
            if !(0.0..=1.0).contains(&o.amplitude) || !o.detune_cents.is_finite() {
                return bad("oscillator amplitude outside [0, 1]");
            }
        }
        let e = &self.envelope;
        let times = [e.attack, e.decay, e.release];
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return bad("negative or non-finite envelope time");
        }
        if !(0.0..=1.0).contains(&e.sustain) {
            return bad("sustain outside [0, 1]");
        }
        if self.filter.kind != FilterKind::None {
            let nyquist = sample_rate as f64 / 2.0;
            if !(self.filter.cutoff_hz > 20.0 && self.filter.cutoff_hz < nyquist) {
                return bad("cutoff outside (20 Hz, Nyquist)");
            }
            if !(self.filter.resonance > 0.0 && self.filter.resonance.is_finite()) {
                return bad("resonance must be positive");
            }
        }
        for fx in self.effects.iter() {
            fx.validate()?;
        }
        if let Some(s) = self.pitch_sweep {
            if !(s.time > 0.0 && s.depth_semitones.is_finite()) {
                return bad("invalid pitch sweep");
            }
        }
        if !(0.0..=1.0).contains(&self.master_gain) {
            return bad("master gain outside [0, 1]");
        }
        Ok(())
    }
}

/// A MIDI note. `onset` and `duration` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub pitch: u8,
    pub velocity: u8,
    pub onset: f64,
    pub duration: f64,
}

impl NoteEvent {
    pub fn new(pitch: u8, velocity: u8, onset: f64, duration: f64) -> Self {
        Self {
            pitch,
            velocity,
            onset,
            duration,
        }
    }

    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }

    pub fn validate(&self) -> Result<()> {
        if self.pitch > 127 {
            return Err(Error::invalid(format!("pitch {} outside [0, 127]", self.pitch)));
        }
        if self.velocity == 0 || self.velocity > 127 {
            return Err(Error::invalid(format!(
                "velocity {} outside [1, 127]",
                self.velocity
            )));
        }
        if !(self.onset >= 0.0 && self.onset.is_finite()) {
            return Err(Error::invalid("onset must be >= 0"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("duration must be > 0"));
        }
        Ok(())
    }

    /// Equal-tempered frequency, A4 = 440 Hz.
    pub fn frequency(&self) -> f64 {
        midi_to_hz(self.pitch as f64)
    }
}

pub fn midi_to_hz(pitch: f64) -> f64 {
    440.0 * 2f64.powf((pitch - 69.0) / 12.0)
}

/// Velocity to linear amplitude: `(v / 127)^1.5`.
pub fn velocity_gain(velocity: u8) -> f64 {
    (velocity as f64 / 127.0).powf(1.5)
}
