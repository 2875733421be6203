use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use super::distribution::FamilyNoteDistribution;
use crate::audio::{AudioBuffer, SILENCE_RMS};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::synthbank::{check_monophonic, render_score, Family, InstrumentPatch, NoteEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoundKind {
    SingleNote,
    Score,
}

/// A sound of one instrument, as a note list to render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundSpec {
    pub instrument_id: u32,
    pub kind: SoundKind,
    pub notes: Vec<NoteEvent>,
    pub length: f64,
}

impl SoundSpec {
    pub fn single_note(instrument_id: u32, note: NoteEvent, length: f64) -> Self {
        Self {
            instrument_id,
            kind: SoundKind::SingleNote,
            notes: vec![note],
            length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::invalid("sound length must be > 0"));
        }
        match self.kind {
            SoundKind::SingleNote => {
                if self.notes.len() != 1 || self.notes[0].onset != 0.0 {
                    return Err(Error::invalid(
                        "single-note sound needs exactly one note at onset 0",
                    ));
                }
            }
            SoundKind::Score => {
                if self.notes.is_empty() {
                    return Err(Error::invalid("score needs at least one note"));
                }
            }
        }
        check_monophonic(&self.notes, self.length)
    }

    /// Stable 64-bit key over every field, for caching renders.
    pub fn cache_key(&self) -> u64 {
        let mut words = vec![
            self.instrument_id as u64,
            self.kind as u64,
            self.length.to_bits(),
        ];
        for n in &self.notes {
            words.extend([
                n.pitch as u64 | (n.velocity as u64) << 8,
                n.onset.to_bits(),
                n.duration.to_bits(),
            ]);
        }
        crate::rng::derive_seed(0x5eed, &words)
    }
}

/// Renders a sound. Release tails past the end of the sound are cut.
pub fn render_sound(patch: &InstrumentPatch, spec: &SoundSpec, sample_rate: u32) -> Result<AudioBuffer> {
    if patch.id != spec.instrument_id {
        return Err(Error::invalid(format!(
            "spec is for instrument {} but patch is {}",
            spec.instrument_id, patch.id
        )));
    }
    spec.validate()?;
    render_score(patch, &spec.notes, sample_rate, spec.length)
}

/// Lengths and densities used to draw sounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Total length of single-note sounds (s).
    pub note_length: f64,
    /// Gate length of single notes (s).
    pub note_duration: f64,
    /// Length of scores and mixture stems (s).
    pub score_length: f64,
    /// Mean notes per second in scores.
    pub score_density: f64,
    /// Range of score note gate lengths (s).
    pub score_note_min: f64,
    pub score_note_max: f64,
    /// Probability that one side of a positive pair is a single note.
    pub p_single_note: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            note_length: super::DEFAULT_NOTE_LENGTH,
            note_duration: super::DEFAULT_NOTE_DURATION,
            score_length: 10.0,
            score_density: 0.8,
            score_note_min: 0.15,
            score_note_max: 0.8,
            p_single_note: 0.5,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(pos(self.note_length)
            && pos(self.note_duration)
            && pos(self.score_length)
            && pos(self.score_density)
            && pos(self.score_note_min))
        {
            return Err(Error::invalid("sampling lengths and density must be > 0"));
        }
        if self.note_duration > self.note_length {
            return Err(Error::invalid("note_duration exceeds note_length"));
        }
        if self.score_note_max < self.score_note_min {
            return Err(Error::invalid("score_note_max < score_note_min"));
        }
        if !(0.0..=1.0).contains(&self.p_single_note) {
            return Err(Error::invalid("p_single_note outside [0, 1]"));
        }
        Ok(())
    }
}

/// Fraction of a score's length that notes may occupy.
const MAX_NOTE_FILL: f64 = 0.8;

/// Draws a monophonic score: a Poisson(density × length) number of notes
/// (at least one), separated by exponentially distributed silences.
pub fn generate_score(
    instrument_id: u32,
    dist: &FamilyNoteDistribution,
    cfg: &SamplingConfig,
    length: f64,
    density: f64,
    rng: &mut Rng,
) -> Result<SoundSpec> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::invalid("density must be > 0"));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::invalid("length must be > 0"));
    }
    let poisson = Poisson::new(density * length).map_err(|e| Error::invalid(e.to_string()))?;
    let count = loop {
        let k: f64 = poisson.sample(rng);
        if k >= 1.0 {
            break k as usize;
        }
    };
    let mut durations: Vec<f64> = (0..count)
        .map(|_| rng.gen_range(cfg.score_note_min..=cfg.score_note_max))
        .collect();
    let total: f64 = durations.iter().sum();
    let budget = MAX_NOTE_FILL * length;
    if total > budget {
        for d in durations.iter_mut() {
            *d *= budget / total;
        }
    }
    let silence = length - durations.iter().sum::<f64>();
    let gaps: Vec<f64> = (0..=count).map(|_| Exp1.sample(rng)).collect();
    let gap_total: f64 = gaps.iter().sum();

    let mut notes = Vec::with_capacity(count);
    let mut t = 0.0;
    for (i, d) in durations.into_iter().enumerate() {
        t += silence * gaps[i] / gap_total;
        notes.push(NoteEvent::new(
            dist.sample_pitch(rng),
            dist.sample_velocity(rng),
            t,
            d,
        ));
        t += d;
    }
    Ok(SoundSpec {
        instrument_id,
        kind: SoundKind::Score,
        notes,
        length,
    })
}

pub fn random_single_note(
    instrument_id: u32,
    dist: &FamilyNoteDistribution,
    cfg: &SamplingConfig,
    rng: &mut Rng,
) -> SoundSpec {
    let note = NoteEvent::new(
        dist.sample_pitch(rng),
        dist.sample_velocity(rng),
        0.0,
        cfg.note_duration,
    );
    SoundSpec::single_note(instrument_id, note, cfg.note_length)
}

/// One sound of `patch`, a single note with probability `p_single_note`,
/// otherwise a score.
pub fn draw_sound(
    patch: &InstrumentPatch,
    dist: &FamilyNoteDistribution,
    cfg: &SamplingConfig,
    rng: &mut Rng,
) -> Result<SoundSpec> {
    if rng.gen_bool(cfg.p_single_note) {
        Ok(random_single_note(patch.id, dist, cfg, rng))
    } else {
        generate_score(patch.id, dist, cfg, cfg.score_length, cfg.score_density, rng)
    }
}

/// Two independent sounds of the same instrument.
pub fn draw_positive_pair(
    patch: &InstrumentPatch,
    dist: &FamilyNoteDistribution,
    cfg: &SamplingConfig,
    rng: &mut Rng,
) -> Result<(SoundSpec, SoundSpec)> {
    Ok((
        draw_sound(patch, dist, cfg, rng)?,
        draw_sound(patch, dist, cfg, rng)?,
    ))
}

/// One instrument's stem inside a mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub instrument_id: u32,
    pub family: Family,
    pub stem: SoundSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<MixtureComponent>,
}

impl MixtureSpec {
    pub fn instrument_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.components.iter().map(|c| c.instrument_id)
    }

    pub fn contains(&self, id: u32) -> bool {
        self.instrument_ids().any(|i| i == id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::invalid("mixture without components"));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.stem.instrument_id != c.instrument_id {
                return Err(Error::invalid("stem instrument does not match component"));
            }
            c.stem.validate()?;
            if self.components[..i].iter().any(|o| o.instrument_id == c.instrument_id) {
                return Err(Error::invalid(format!(
                    "instrument {} appears twice in one mixture",
                    c.instrument_id
                )));
            }
            if (c.stem.length - self.components[0].stem.length).abs() > 1e-12 {
                return Err(Error::invalid("mixture stems differ in length"));
            }
        }
        Ok(())
    }
}

/// Sum of stems, peak-normalized to 0.9 when the sum would clip.
pub fn mix_stems(stems: &[AudioBuffer]) -> Result<AudioBuffer> {
    let first = stems
        .first()
        .ok_or_else(|| Error::invalid("mix_stems needs at least one stem"))?;
    for s in stems {
        if s.len() != first.len() || s.sample_rate != first.sample_rate {
            return Err(Error::invalid("stems differ in length or sample rate"));
        }
    }
    for s in stems {
        let rms = s.rms();
        if rms < SILENCE_RMS {
            return Err(Error::SilentStem {
                instrument: None,
                rms,
            });
        }
    }
    let mut out = vec![0.0; first.len()];
    for s in stems {
        for (o, x) in out.iter_mut().zip(&s.samples) {
            *o += x;
        }
    }
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 1.0 {
        let g = 0.9 / peak;
        for o in out.iter_mut() {
            *o *= g;
        }
    }
    Ok(AudioBuffer::new(out, first.sample_rate))
}

/// Renders every stem of a mixture and mixes them. Returns the mix and the
/// stems.
pub fn render_mixture(
    bank: &crate::synthbank::PatchBank,
    spec: &MixtureSpec,
    sample_rate: u32,
) -> Result<(AudioBuffer, Vec<AudioBuffer>)> {
    spec.validate()?;
    let mut stems = Vec::with_capacity(spec.components.len());
    for c in &spec.components {
        let patch = bank
            .get(c.instrument_id)
            .ok_or_else(|| Error::invalid(format!("unknown instrument {}", c.instrument_id)))?;
        let audio = render_sound(patch, &c.stem, sample_rate)?;
        let rms = audio.rms();
        if rms < SILENCE_RMS {
            return Err(Error::SilentStem {
                instrument: Some(c.instrument_id),
                rms,
            });
        }
        stems.push(audio);
    }
    Ok((mix_stems(&stems)?, stems))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasetgen::family_distribution;
    use crate::rng::seeded;

    #[test]
    fn scores_are_monophonic_and_exact_length() {
        let d = family_distribution(Family::SynthLead);
        let cfg = SamplingConfig::default();
        let mut rng = seeded(3);
        for _ in 0..500 {
            let s = generate_score(7, &d, &cfg, 10.0, 0.8, &mut rng).unwrap();
            assert_eq!(s.length, 10.0);
            assert!(!s.notes.is_empty());
            s.validate().unwrap();
        }
    }

    #[test]
    fn tiny_density_still_yields_a_note() {
        let d = family_distribution(Family::Bass);
        let cfg = SamplingConfig::default();
        let mut rng = seeded(5);
        for _ in 0..50 {
            let s = generate_score(0, &d, &cfg, 1.0, 1e-3, &mut rng).unwrap();
            assert_eq!(s.notes.len(), 1);
        }
        assert!(generate_score(0, &d, &cfg, 1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn mix_identity_and_linearity() {
        let s = AudioBuffer::new((0..100).map(|i| 0.3 * (i as f64 * 0.3).sin()).collect(), 16_000);
        assert_eq!(mix_stems(&[s.clone()]).unwrap(), s);
        let two = mix_stems(&[s.clone(), s.clone()]).unwrap();
        for (a, b) in two.samples.iter().zip(&s.samples) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn mix_errors() {
        let s = AudioBuffer::new(vec![0.5; 100], 16_000);
        let quiet = AudioBuffer::new(vec![1e-5; 100], 16_000);
        let short = AudioBuffer::new(vec![0.5; 99], 16_000);
        assert!(matches!(mix_stems(&[s.clone(), quiet]), Err(Error::SilentStem { .. })));
        assert!(matches!(mix_stems(&[s, short]), Err(Error::InvalidArgument(_))));
        assert!(mix_stems(&[]).is_err());
    }

    #[test]
    fn single_note_spec_validation() {
        let n = NoteEvent::new(60, 100, 0.5, 1.0);
        assert!(SoundSpec::single_note(0, n, 4.0).validate().is_err());
        let n = NoteEvent::new(60, 100, 0.0, 1.0);
        assert!(SoundSpec::single_note(0, n, 4.0).validate().is_ok());
        assert!(SoundSpec::single_note(0, n, 0.5).validate().is_err());
    }
}
