use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::distribution::FamilyDistributions;
use super::sound::*;
use crate::audio::SILENCE_RMS;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Rng};
use crate::synthbank::{Family, InstrumentPatch};

/// Where batch builders get their sounds from.
pub trait SoundSource {
    /// A sound of either kind.
    fn sound(&self, patch: &InstrumentPatch, rng: &mut Rng) -> Result<SoundSpec>;
    fn single_note(&self, patch: &InstrumentPatch, rng: &mut Rng) -> Result<SoundSpec>;
    /// A score that renders above the silence threshold.
    fn stem(&self, patch: &InstrumentPatch, rng: &mut Rng) -> Result<SoundSpec>;
}

const STEM_ATTEMPTS: usize = 16;

/// Draws new sounds from the family distributions on every call.
pub struct FreshSounds<'a> {
    pub dists: &'a FamilyDistributions,
    pub cfg: &'a SamplingConfig,
    pub sample_rate: u32,
}

impl SoundSource for FreshSounds<'_> {
    fn sound(&self, patch: &InstrumentPatch, rng: &mut Rng) -> Result<SoundSpec> {
        draw_sound(patch, self.dists.get(patch.family), self.cfg, rng)
    }

    fn single_note(&self, patch: &InstrumentPatch, rng: &mut Rng) -> Result<SoundSpec> {
        Ok(random_single_note(
            patch.id,
            self.dists.get(patch.family),
            self.cfg,
            rng,
        ))
    }

    fn stem(&self, patch: &InstrumentPatch, rng: &mut Rng) -> Result<SoundSpec> {
        let dist = self.dists.get(patch.family);
        let mut rms = 0.0;
        for _ in 0..STEM_ATTEMPTS {
            let spec = generate_score(
                patch.id,
                dist,
                self.cfg,
                self.cfg.score_length,
                self.cfg.score_density,
                rng,
            )?;
            rms = render_sound(patch, &spec, self.sample_rate)?.rms();
            if rms >= SILENCE_RMS {
                return Ok(spec);
            }
        }
        Err(Error::SilentStem {
            instrument: Some(patch.id),
            rms,
        })
    }
}

/// Draws uniformly from a fixed, pre-drawn set of sounds per instrument.
/// Stems in the pool must already be known to be audible.
#[derive(Debug, Clone, Default)]
pub struct PooledSounds {
    pub notes: HashMap<u32, Vec<SoundSpec>>,
    pub stems: HashMap<u32, Vec<SoundSpec>>,
    pub p_single_note: f64,
}

impl PooledSounds {
    fn pick<'a>(pool: &'a HashMap<u32, Vec<SoundSpec>>, id: u32, rng: &mut Rng) -> Result<&'a SoundSpec> {
        pool.get(&id)
            .and_then(|v| v.choose(rng))
            .ok_or_else(|| Error::invalid(format!("no pooled sounds for instrument {id}")))
    }
}

impl SoundSource for PooledSounds {
    fn sound(&self, patch: &InstrumentPatch, rng: &mut Rng) -> Result<SoundSpec> {
        if rng.gen_bool(self.p_single_note) {
            self.single_note(patch, rng)
        } else {
            self.stem(patch, rng)
        }
    }

    fn single_note(&self, patch: &InstrumentPatch, rng: &mut Rng) -> Result<SoundSpec> {
        Self::pick(&self.notes, patch.id, rng).cloned()
    }

    fn stem(&self, patch: &InstrumentPatch, rng: &mut Rng) -> Result<SoundSpec> {
        Self::pick(&self.stems, patch.id, rng).cloned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Anchor,
    Positive,
    Mixture,
    Constituent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "item", rename_all = "snake_case")]
pub enum BatchItem {
    Sound { role: Role, spec: SoundSpec },
    Mixture { spec: MixtureSpec },
}

impl BatchItem {
    pub fn is_mixture(&self) -> bool {
        matches!(self, BatchItem::Mixture { .. })
    }
}

/// An ordered contrastive minibatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub items: Vec<BatchItem>,
}

impl BatchSpec {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Every instrument occurrence: once per single sound, once per mixture
    /// component.
    pub fn instrument_multiset(&self) -> Vec<u32> {
        let mut ids = Vec::new();
        for item in &self.items {
            match item {
                BatchItem::Sound { spec, .. } => ids.push(spec.instrument_id),
                BatchItem::Mixture { spec } => ids.extend(spec.instrument_ids()),
            }
        }
        ids
    }
}

/// Keys the counter-based generator of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchKey {
    pub seed: u64,
    pub index: u64,
}

impl BatchKey {
    fn selection_rng(&self) -> Rng {
        stream_rng(self.seed, self.index, 0)
    }

    fn item_rng(&self, item: usize) -> Rng {
        stream_rng(self.seed, self.index, item as u64 + 1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchOptions {
    /// Keep an original patch and its effect-stripped copy out of the same
    /// batch.
    pub forbid_augmented_siblings: bool,
}

fn choose_distinct<'a>(
    candidates: &[&'a InstrumentPatch],
    count: usize,
    rng: &mut Rng,
    opts: &BatchOptions,
    used_roots: &mut HashSet<u32>,
    used_ids: &mut HashSet<u32>,
) -> Vec<&'a InstrumentPatch> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.shuffle(rng);
    let mut out = Vec::with_capacity(count);
    for i in order {
        if out.len() == count {
            break;
        }
        let p = candidates[i];
        if used_ids.contains(&p.id) {
            continue;
        }
        if opts.forbid_augmented_siblings && used_roots.contains(&p.root_id()) {
            continue;
        }
        used_ids.insert(p.id);
        used_roots.insert(p.root_id());
        out.push(p);
    }
    out
}

/// `n / 2` distinct instruments, two independent sounds each, laid out as
/// `[anchor_0, positive_0, anchor_1, positive_1, ...]`.
pub fn build_single_source_batch(
    candidates: &[&InstrumentPatch],
    source: &dyn SoundSource,
    n: usize,
    key: BatchKey,
    opts: &BatchOptions,
) -> Result<BatchSpec> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::invalid(format!("batch size {n} must be even and > 0")));
    }
    let mut rng = key.selection_rng();
    let chosen = choose_distinct(
        candidates,
        n / 2,
        &mut rng,
        opts,
        &mut HashSet::new(),
        &mut HashSet::new(),
    );
    if chosen.len() < n / 2 {
        return Err(Error::invalid(format!(
            "need {} distinct instruments, only {} available",
            n / 2,
            chosen.len()
        )));
    }
    let mut items = Vec::with_capacity(n);
    for (k, patch) in chosen.iter().enumerate() {
        let a = source.sound(patch, &mut key.item_rng(2 * k))?;
        let p = source.sound(patch, &mut key.item_rng(2 * k + 1))?;
        items.push(BatchItem::Sound {
            role: Role::Anchor,
            spec: a,
        });
        items.push(BatchItem::Sound {
            role: Role::Positive,
            spec: p,
        });
    }
    Ok(BatchSpec { items })
}

/// `n_mixtures` mixtures with one instrument per slot, no instrument shared
/// between mixtures. Each mixture is followed by one single-note sound of
/// each of its constituents.
pub fn build_mixture_batch(
    candidates: &[&InstrumentPatch],
    source: &dyn SoundSource,
    n_mixtures: usize,
    slots: &[Family],
    key: BatchKey,
    opts: &BatchOptions,
) -> Result<BatchSpec> {
    if n_mixtures == 0 || slots.is_empty() {
        return Err(Error::invalid("need at least one mixture and one slot"));
    }
    let mut rng = key.selection_rng();
    let (mut roots, mut ids) = (HashSet::new(), HashSet::new());
    let mut per_slot = Vec::with_capacity(slots.len());
    for &family in slots {
        let pool: Vec<&InstrumentPatch> = candidates
            .iter()
            .copied()
            .filter(|p| p.family == family)
            .collect();
        let chosen = choose_distinct(&pool, n_mixtures, &mut rng, opts, &mut roots, &mut ids);
        if chosen.len() < n_mixtures {
            return Err(Error::invalid(format!(
                "family {family}: need {n_mixtures} instruments, only {} available",
                chosen.len()
            )));
        }
        per_slot.push(chosen);
    }

    let mut items = Vec::with_capacity(n_mixtures * (slots.len() + 1));
    let mut counter = 0;
    for m in 0..n_mixtures {
        let mut components = Vec::with_capacity(slots.len());
        let mut singles = Vec::with_capacity(slots.len());
        for chosen in &per_slot {
            let patch = chosen[m];
            let stem = source.stem(patch, &mut key.item_rng(counter))?;
            let single = source.single_note(patch, &mut key.item_rng(counter + 1))?;
            counter += 2;
            components.push(MixtureComponent {
                instrument_id: patch.id,
                family: patch.family,
                stem,
            });
            singles.push(BatchItem::Sound {
                role: Role::Constituent,
                spec: single,
            });
        }
        items.push(BatchItem::Mixture {
            spec: MixtureSpec { components },
        });
        items.extend(singles);
    }
    Ok(BatchSpec { items })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthbank::generate_bank;

    fn fixture() -> (Vec<InstrumentPatch>, FamilyDistributions, SamplingConfig) {
        let bank = generate_bank(8, &Family::MIXTURE_SLOTS, 1).unwrap();
        let cfg = SamplingConfig {
            note_length: 0.5,
            note_duration: 0.3,
            score_length: 1.0,
            ..SamplingConfig::default()
        };
        (bank, FamilyDistributions::parametric(), cfg)
    }

    #[test]
    fn single_source_multiplicities() {
        let (bank, dists, cfg) = fixture();
        let cands: Vec<&InstrumentPatch> = bank.iter().collect();
        let src = FreshSounds {
            dists: &dists,
            cfg: &cfg,
            sample_rate: 16_000,
        };
        for n in [2, 4, 24] {
            let b = build_single_source_batch(&cands, &src, n, BatchKey { seed: 3, index: 0 }, &Default::default()).unwrap();
            assert_eq!(b.len(), n);
            let mut counts = HashMap::new();
            for id in b.instrument_multiset() {
                *counts.entry(id).or_insert(0) += 1;
            }
            assert_eq!(counts.len(), n / 2);
            assert!(counts.values().all(|&c| c == 2));
        }
        assert!(build_single_source_batch(&cands, &src, 3, BatchKey { seed: 3, index: 0 }, &Default::default()).is_err());
        assert!(build_single_source_batch(&cands, &src, 50, BatchKey { seed: 3, index: 0 }, &Default::default()).is_err());
    }

    #[test]
    fn mixture_batch_shape() {
        let (bank, dists, cfg) = fixture();
        let cands: Vec<&InstrumentPatch> = bank.iter().collect();
        let src = FreshSounds {
            dists: &dists,
            cfg: &cfg,
            sample_rate: 16_000,
        };
        let key = BatchKey { seed: 9, index: 4 };
        let b = build_mixture_batch(&cands, &src, 2, &Family::MIXTURE_SLOTS, key, &Default::default()).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(b.items.iter().filter(|i| i.is_mixture()).count(), 2);
        let mixes: Vec<&MixtureSpec> = b
            .items
            .iter()
            .filter_map(|i| match i {
                BatchItem::Mixture { spec } => Some(spec),
                _ => None,
            })
            .collect();
        assert!(mixes[0].instrument_ids().all(|id| !mixes[1].contains(id)));
        let ids: HashSet<u32> = b.instrument_multiset().into_iter().collect();
        assert_eq!(ids.len(), 6);
        let again = build_mixture_batch(&cands, &src, 2, &Family::MIXTURE_SLOTS, key, &Default::default()).unwrap();
        assert_eq!(b, again);
        assert!(build_mixture_batch(&cands, &src, 9, &Family::MIXTURE_SLOTS, key, &Default::default()).is_err());
    }

    #[test]
    fn sibling_exclusion() {
        let (bank, dists, cfg) = fixture();
        let mut all = bank.clone();
        let mut next = bank.len() as u32;
        for p in &bank {
            all.push(crate::synthbank::strip_effects(p, next));
            next += 1;
        }
        let cands: Vec<&InstrumentPatch> = all.iter().collect();
        let src = FreshSounds {
            dists: &dists,
            cfg: &cfg,
            sample_rate: 16_000,
        };
        let opts = BatchOptions {
            forbid_augmented_siblings: true,
        };
        for index in 0..20 {
            let b = build_single_source_batch(&cands, &src, 24, BatchKey { seed: 1, index }, &opts).unwrap();
            let roots: HashSet<u32> = b
                .instrument_multiset()
                .into_iter()
                .map(|id| all[id as usize].root_id())
                .collect();
            assert_eq!(roots.len(), 12);
        }
    }
}
