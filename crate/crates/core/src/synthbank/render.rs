use std::f64::consts::PI;

use rand::Rng as _;

use super::effects::{apply_chain, apply_filter, tail_seconds};
use super::patch::{velocity_gain, InstrumentPatch, NoteEvent, Waveform};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// Filter ring-out allowance after the dry voice ends.
const FILTER_TAIL_S: f64 = 0.05;

/// Renders one note into a buffer of `⌈length × sample_rate⌉` samples.
///
/// The whole note including its release must fit in `length`.
pub fn render_note(
    patch: &InstrumentPatch,
    note: &NoteEvent,
    sample_rate: u32,
    length: f64,
) -> Result<AudioBuffer> {
    patch.validate(sample_rate)?;
    note.validate()?;
    let needed = note.end() + patch.envelope.release;
    if length + 1e-9 < needed {
        return Err(Error::invalid(format!(
            "render length {length} s shorter than note end plus release ({needed} s)"
        )));
    }
    let mut out = vec![0.0; AudioBuffer::len_for(length, sample_rate)];
    add_voice(patch, note, sample_rate, &mut out);
    peak_guard(&mut out);
    Ok(AudioBuffer::new(out, sample_rate))
}

/// Renders a monophonic note sequence. Notes whose release runs past the end
/// of the buffer are truncated.
pub fn render_score(
    patch: &InstrumentPatch,
    notes: &[NoteEvent],
    sample_rate: u32,
    length: f64,
) -> Result<AudioBuffer> {
    patch.validate(sample_rate)?;
    check_monophonic(notes, length)?;
    let mut out = vec![0.0; AudioBuffer::len_for(length, sample_rate)];
    for note in notes {
        add_voice(patch, note, sample_rate, &mut out);
    }
    peak_guard(&mut out);
    Ok(AudioBuffer::new(out, sample_rate))
}

pub(crate) fn check_monophonic(notes: &[NoteEvent], length: f64) -> Result<()> {
    for n in notes {
        n.validate()?;
        if n.end() > length + 1e-9 {
            return Err(Error::invalid(format!(
                "note ending at {} s exceeds length {length} s",
                n.end()
            )));
        }
    }
    let mut sorted: Vec<&NoteEvent> = notes.iter().collect();
    sorted.sort_by(|a, b| a.onset.total_cmp(&b.onset));
    for w in sorted.windows(2) {
        if w[0].end() > w[1].onset {
            return Err(Error::invalid(format!(
                "overlapping notes at {} s and {} s",
                w[0].onset, w[1].onset
            )));
        }
    }
    Ok(())
}

/// Scales the buffer down to unit peak if it exceeds it.
fn peak_guard(buf: &mut [f64]) {
    let peak = buf.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 1.0 {
        for s in buf.iter_mut() {
            *s /= peak;
        }
    }
}

/// Adds the raw (un-normalized) render of one note into `out`.
fn add_voice(patch: &InstrumentPatch, note: &NoteEvent, sample_rate: u32, out: &mut [f64]) {
    let sr = sample_rate as f64;
    let n = out.len();
    let start = (note.onset * sr).round() as usize;
    if start >= n {
        return;
    }
    let env = &patch.envelope;
    let dry_len = ((note.duration + env.release) * sr).ceil() as usize;
    let dry_end = n.min(start + dry_len);
    let tail = ((tail_seconds(&patch.effects) + FILTER_TAIL_S) * sr).ceil() as usize;
    let end = n.min(dry_end + tail);

    let mut voice = vec![0.0; end - start];
    let dry = dry_end - start;
    let f0 = note.frequency();
    let total_amp: f64 = patch.oscillators.iter().map(|o| o.amplitude).sum();
    let amp_norm = 1.0 / total_amp.max(1.0);
    let mut noise = seeded(derive_seed(patch.seed, &[note.pitch as u64, start as u64]));

    for osc in &patch.oscillators {
        if osc.amplitude == 0.0 {
            continue;
        }
        let a = osc.amplitude * amp_norm;
        let base = f0 * 2f64.powf(osc.detune_cents / 1200.0);
        let mut phase = 0.0f64;
        for (i, v) in voice[..dry].iter_mut().enumerate() {
            let s = match osc.waveform {
                Waveform::Sine => (2.0 * PI * phase).sin(),
                Waveform::Saw => 2.0 * phase - 1.0,
                Waveform::Square => {
                    if phase < 0.5 {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Waveform::Triangle => 4.0 * (phase - 0.5).abs() - 1.0,
                Waveform::Noise => noise.gen_range(-1.0..1.0),
            };
            *v += a * s;
            let f = match patch.pitch_sweep {
                Some(sw) => {
                    let t = i as f64 / sr;
                    base * 2f64.powf(sw.depth_semitones * (-t / sw.time).exp() / 12.0)
                }
                None => base,
            };
            phase += f / sr;
            phase -= phase.floor();
        }
    }
    for (i, v) in voice[..dry].iter_mut().enumerate() {
        *v *= env.level(i as f64 / sr, note.duration);
    }
    apply_filter(&patch.filter, &mut voice, sr);
    apply_chain(&patch.effects, &mut voice, sr);

    let gain = patch.master_gain * velocity_gain(note.velocity);
    for (o, v) in out[start..end].iter_mut().zip(&voice) {
        *o += gain * v;
    }
}
