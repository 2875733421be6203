//! Sampling of notes, scores, positive pairs, contrastive minibatches and
//! instrument mixtures.
//!
//! Family note marginals are discretized truncated normals. Scores are
//! monophonic: a Poisson number of notes separated by exponential silences.
//! All batch randomness is keyed by `(seed, batch index, item index)`.

mod batch;
mod distribution;
mod manifest;
mod sound;

pub use batch::{
    build_mixture_batch, build_single_source_batch, BatchItem, BatchKey, BatchOptions, BatchSpec,
    FreshSounds, PooledSounds, Role, SoundSource,
};
pub use distribution::{
    family_distribution, median_note, median_note_with_duration, FamilyDistributions,
    FamilyNoteDistribution, FamilyNoteParams, TruncatedNormal, DEFAULT_NOTE_DURATION, DEFAULT_NOTE_LENGTH,
};
pub use manifest::{content_path, parse_manifest, write_manifest, ManifestRecord};
pub use sound::{
    draw_positive_pair, draw_sound, generate_score, mix_stems, random_single_note, render_mixture,
    render_sound, MixtureComponent, MixtureSpec, SamplingConfig, SoundKind, SoundSpec,
};
