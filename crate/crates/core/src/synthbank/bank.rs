use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::patch::*;
use super::Family;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Rng};

pub const BANK_FORMAT_VERSION: u32 = 1;

/// Family-conditioned parameter ranges. Time ranges are sampled
/// log-uniformly, levels uniformly.
struct FamilyPrior {
    waveforms: &'static [(Waveform, f64)],
    n_osc: (usize, usize),
    /// Probabilities of lowpass and highpass; the rest is unfiltered.
    lowpass: f64,
    highpass: f64,
    cutoff: (f64, f64),
    attack: (f64, f64),
    decay: (f64, f64),
    sustain: (f64, f64),
    release: (f64, f64),
    fx_prob: f64,
}

fn prior(family: Family) -> FamilyPrior {
    use Waveform::*;
    let p = |waveforms, n_osc, lowpass, highpass, cutoff, attack, decay, sustain, release, fx_prob| {
        FamilyPrior {
            waveforms,
            n_osc,
            lowpass,
            highpass,
            cutoff,
            attack,
            decay,
            sustain,
            release,
            fx_prob,
        }
    };
    match family {
        Family::Bass => p(
            &[(Saw, 3.0), (Square, 2.0), (Sine, 2.0), (Triangle, 1.0)],
            (1, 3),
            0.9,
            0.0,
            (150.0, 1500.0),
            (0.002, 0.03),
            (0.05, 0.6),
            (0.3, 0.9),
            (0.03, 0.3),
            0.4,
        ),
        // oscillators are replaced by the noise + body template
        Family::Percussion => p(
            &[(Sine, 1.0), (Triangle, 1.0)],
            (1, 1),
            0.4,
            0.3,
            (500.0, 6000.0),
            (0.0005, 0.005),
            (0.04, 0.5),
            (0.0, 0.1),
            (0.02, 0.2),
            0.5,
        ),
        Family::Strings => p(
            &[(Saw, 4.0), (Triangle, 1.0)],
            (2, 3),
            0.8,
            0.0,
            (1000.0, 5000.0),
            (0.05, 0.4),
            (0.1, 0.5),
            (0.6, 1.0),
            (0.1, 0.6),
            0.5,
        ),
        Family::Brass => p(
            &[(Saw, 3.0), (Square, 1.0)],
            (1, 3),
            0.9,
            0.0,
            (800.0, 4000.0),
            (0.02, 0.12),
            (0.05, 0.3),
            (0.6, 0.95),
            (0.05, 0.3),
            0.4,
        ),
        Family::SynthLead => p(
            &[(Saw, 3.0), (Square, 3.0), (Triangle, 1.0), (Sine, 1.0)],
            (1, 3),
            0.6,
            0.1,
            (800.0, 7000.0),
            (0.002, 0.05),
            (0.05, 0.5),
            (0.4, 1.0),
            (0.03, 0.4),
            0.6,
        ),
        Family::SynthPad => p(
            &[(Saw, 2.0), (Triangle, 2.0), (Sine, 1.0), (Square, 1.0)],
            (2, 3),
            0.8,
            0.0,
            (400.0, 4000.0),
            (0.1, 0.8),
            (0.2, 1.0),
            (0.5, 1.0),
            (0.3, 1.0),
            0.7,
        ),
        Family::Keyboard => p(
            &[(Triangle, 2.0), (Sine, 2.0), (Square, 1.0)],
            (1, 3),
            0.7,
            0.0,
            (1000.0, 6000.0),
            (0.001, 0.01),
            (0.3, 1.5),
            (0.0, 0.3),
            (0.05, 0.4),
            0.4,
        ),
        Family::Guitar => p(
            &[(Saw, 2.0), (Triangle, 2.0), (Square, 1.0)],
            (1, 2),
            0.9,
            0.0,
            (800.0, 5000.0),
            (0.001, 0.01),
            (0.2, 1.2),
            (0.0, 0.4),
            (0.05, 0.3),
            0.5,
        ),
        Family::Flute => p(
            &[(Sine, 3.0), (Triangle, 2.0), (Noise, 0.5)],
            (1, 2),
            0.5,
            0.0,
            (2000.0, 7000.0),
            (0.03, 0.15),
            (0.05, 0.3),
            (0.7, 1.0),
            (0.05, 0.3),
            0.4,
        ),
        Family::Reed => p(
            &[(Square, 3.0), (Saw, 1.0)],
            (1, 2),
            0.8,
            0.0,
            (1000.0, 5000.0),
            (0.01, 0.08),
            (0.05, 0.3),
            (0.6, 1.0),
            (0.05, 0.3),
            0.4,
        ),
        Family::Mallet => p(
            &[(Sine, 3.0), (Triangle, 2.0)],
            (1, 2),
            0.3,
            0.0,
            (2000.0, 7000.0),
            (0.001, 0.005),
            (0.1, 0.8),
            (0.0, 0.1),
            (0.05, 0.5),
            0.4,
        ),
        Family::Organ => p(
            &[(Sine, 3.0), (Square, 1.0), (Triangle, 1.0)],
            (1, 3),
            0.3,
            0.0,
            (1500.0, 7000.0),
            (0.005, 0.03),
            (0.01, 0.1),
            (0.8, 1.0),
            (0.02, 0.1),
            0.5,
        ),
    }
}

fn log_uniform(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo <= 0.0 {
        return rng.gen_range(lo..=hi);
    }
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

fn pick_waveform(rng: &mut Rng, table: &[(Waveform, f64)]) -> Waveform {
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut u = rng.gen_range(0.0..total);
    for &(w, weight) in table {
        if u < weight {
            return w;
        }
        u -= weight;
    }
    table[table.len() - 1].0
}

fn random_effect(rng: &mut Rng) -> Effect {
    match rng.gen_range(0..4) {
        0 => Effect::Reverb {
            decay: log_uniform(rng, (0.5, 3.0)),
            wet: rng.gen_range(0.1..0.5),
        },
        1 => Effect::Delay {
            time: rng.gen_range(0.08..0.4),
            feedback: rng.gen_range(0.0..0.6),
            wet: rng.gen_range(0.1..0.4),
        },
        2 => Effect::Distortion {
            drive: log_uniform(rng, (1.5, 8.0)),
        },
        _ => Effect::Chorus {
            rate_hz: log_uniform(rng, (0.2, 3.0)),
            depth_ms: rng.gen_range(1.0..8.0),
        },
    }
}

fn random_patch(id: u32, family: Family, seed: u64) -> InstrumentPatch {
    let mut rng = seeded(seed);
    let pr = prior(family);

    let mut oscillators = Vec::new();
    let mut pitch_sweep = None;
    if family == Family::Percussion {
        oscillators.push(Oscillator {
            waveform: Waveform::Noise,
            amplitude: rng.gen_range(0.3..1.0),
            detune_cents: 0.0,
        });
        oscillators.push(Oscillator {
            waveform: pick_waveform(&mut rng, pr.waveforms),
            amplitude: rng.gen_range(0.2..1.0),
            detune_cents: 0.0,
        });
        pitch_sweep = Some(PitchSweep {
            depth_semitones: rng.gen_range(2.0..24.0),
            time: log_uniform(&mut rng, (0.01, 0.08)),
        });
    } else {
        let n = rng.gen_range(pr.n_osc.0..=pr.n_osc.1);
        for k in 0..n {
            oscillators.push(Oscillator {
                waveform: pick_waveform(&mut rng, pr.waveforms),
                amplitude: if k == 0 {
                    rng.gen_range(0.6..1.0)
                } else {
                    rng.gen_range(0.1..0.8)
                },
                detune_cents: if k == 0 {
                    0.0
                } else {
                    rng.gen_range(-10.0..10.0)
                },
            });
        }
    }

    let envelope = Envelope {
        attack: log_uniform(&mut rng, pr.attack),
        decay: log_uniform(&mut rng, pr.decay),
        sustain: rng.gen_range(pr.sustain.0..=pr.sustain.1),
        release: log_uniform(&mut rng, pr.release),
    };

    let u: f64 = rng.gen();
    let kind = if u < pr.lowpass {
        FilterKind::Lowpass
    } else if u < pr.lowpass + pr.highpass {
        FilterKind::Highpass
    } else {
        FilterKind::None
    };
    let filter = Filter {
        kind,
        cutoff_hz: log_uniform(&mut rng, pr.cutoff),
        resonance: log_uniform(&mut rng, (0.5, 4.0)),
    };

    let mut effects = Vec::new();
    if rng.gen_bool(pr.fx_prob) {
        let n = rng.gen_range(1..=2);
        for _ in 0..n {
            effects.push(random_effect(&mut rng));
        }
    }

    InstrumentPatch {
        id,
        family,
        oscillators,
        envelope,
        filter,
        effects: EffectChain(effects),
        pitch_sweep,
        master_gain: rng.gen_range(0.5..0.9),
        seed: rng.gen(),
        augmented_from: None,
    }
}

/// Generates `n_per_family` patches for each family, ids `0..` in family
/// order. A family's patches depend only on `(seed, family, index)`.
pub fn generate_bank(n_per_family: usize, families: &[Family], seed: u64) -> Result<Vec<InstrumentPatch>> {
    if families.is_empty() {
        return Err(Error::invalid("empty family set"));
    }
    if n_per_family == 0 {
        return Err(Error::invalid("n_per_family must be >= 1"));
    }
    let mut seen = Vec::new();
    for f in families {
        if !seen.contains(f) {
            seen.push(*f);
        }
    }
    let mut out = Vec::with_capacity(n_per_family * seen.len());
    for family in seen {
        for i in 0..n_per_family {
            let id = out.len() as u32;
            let s = derive_seed(seed, &[family.index() as u64, i as u64]);
            out.push(random_patch(id, family, s));
        }
    }
    Ok(out)
}

/// Copy of `patch` with its effect chain removed, under `new_id`.
pub fn strip_effects(patch: &InstrumentPatch, new_id: u32) -> InstrumentPatch {
    InstrumentPatch {
        id: new_id,
        effects: EffectChain::default(),
        augmented_from: Some(patch.root_id()),
        ..patch.clone()
    }
}

/// Indexed, immutable collection of patches.
#[derive(Debug, Clone)]
pub struct PatchBank {
    patches: Vec<InstrumentPatch>,
    index: HashMap<u32, usize>,
}

impl PatchBank {
    pub fn new(patches: Vec<InstrumentPatch>) -> Result<Self> {
        let mut index = HashMap::with_capacity(patches.len());
        for (i, p) in patches.iter().enumerate() {
            if index.insert(p.id, i).is_some() {
                return Err(Error::invalid(format!("duplicate patch id {}", p.id)));
            }
        }
        Ok(Self { patches, index })
    }

    pub fn get(&self, id: u32) -> Option<&InstrumentPatch> {
        self.index.get(&id).map(|&i| &self.patches[i])
    }

    pub fn patches(&self) -> &[InstrumentPatch] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn of_family(&self, family: Family) -> impl Iterator<Item = &InstrumentPatch> {
        self.patches.iter().filter(move |p| p.family == family)
    }

    pub fn originals(&self) -> impl Iterator<Item = &InstrumentPatch> {
        self.patches.iter().filter(|p| !p.is_augmented())
    }

    pub fn next_id(&self) -> u32 {
        self.patches.iter().map(|p| p.id + 1).max().unwrap_or(0)
    }
}

/// Which partition an instrument belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Persisted bank document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankFile {
    pub version: u32,
    pub config_hash: String,
    pub sample_rate: u32,
    pub patches: Vec<InstrumentPatch>,
    /// Split of each original patch, by id. Augmented patches are training-only.
    pub splits: Vec<(u32, Split)>,
}

impl BankFile {
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let file: BankFile = serde_json::from_slice(bytes)?;
        if file.version != BANK_FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported bank version {} (expected {BANK_FORMAT_VERSION})",
                file.version
            )));
        }
        if file.sample_rate == 0 {
            return Err(Error::format("zero sample rate"));
        }
        for p in &file.patches {
            p.validate(file.sample_rate)?;
        }
        let bank = PatchBank::new(file.patches.clone())?;
        for (id, _) in &file.splits {
            if bank.get(*id).is_none() {
                return Err(Error::format(format!("split refers to unknown id {id}")));
            }
        }
        Ok(file)
    }

    pub fn bank(&self) -> Result<PatchBank> {
        PatchBank::new(self.patches.clone())
    }

    pub fn split_of(&self, id: u32) -> Option<Split> {
        self.splits.iter().find(|(i, _)| *i == id).map(|(_, s)| *s)
    }
}
