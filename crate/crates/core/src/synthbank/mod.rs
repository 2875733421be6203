//! Deterministic procedural synthesizer.
//!
//! A patch is a 1–3 oscillator subtractive voice (ADSR, biquad filter)
//! followed by an ordered effect chain. Percussion patches use a noise burst
//! plus a pitched body with a downward pitch sweep. Velocity scales the
//! rendered note by `(v / 127)^1.5` after the effect chain, so peak amplitude
//! is monotone in velocity. Rendering is a pure function of its inputs.

mod bank;
mod effects;
mod family;
mod patch;
mod render;

pub use bank::{generate_bank, strip_effects, BankFile, PatchBank, Split, BANK_FORMAT_VERSION};
pub use effects::tail_seconds;
pub use family::Family;
pub use patch::{
    midi_to_hz, velocity_gain, Effect, EffectChain, Envelope, Filter, FilterKind, InstrumentPatch,
    NoteEvent, Oscillator, PitchSweep, Waveform,
};
pub use render::{render_note, render_score};
pub(crate) use render::check_monophonic;
