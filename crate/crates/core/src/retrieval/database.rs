//! The database is stored as two files: `db.bin` holds the vectors
//! (`b"TRDB"`, `u32` version, `u64` count, `u64` dim, then row-major
//! little-endian `f64`), `db.json` the ids, families and provenance.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embedder::Embedder;
use crate::datasetgen::{median_note_with_duration, render_sound, FamilyDistributions, SoundSpec};
use crate::dspfeatures::{MelFrontend, SoundFeatures};
use crate::encoder::{dot, l2_norm};
use crate::error::{Error, Result};
use crate::synthbank::{Family, InstrumentPatch, PatchBank};

pub const DB_MAGIC: &[u8; 4] = b"TRDB";
pub const DB_VERSION: u32 = 1;
pub const DB_BIN: &str = "db.bin";
pub const DB_INDEX: &str = "db.json";
const UNIT_TOL: f64 = 1e-6;

/// How database sounds are rendered: one note at the family's median pitch
/// and velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MedianNotePolicy {
    pub note_duration: f64,
    pub note_length: f64,
}

impl MedianNotePolicy {
    pub fn sound(&self, patch: &InstrumentPatch, dists: &FamilyDistributions) -> SoundSpec {
        let note = median_note_with_duration(dists.get(patch.family), self.note_duration);
        SoundSpec::single_note(patch.id, note, self.note_length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub method: String,
    /// Hash of the checkpoint the vectors came from; empty for
    /// training-free methods.
    pub checkpoint_hash: String,
    pub config_hash: String,
    pub policy: MedianNotePolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDatabase {
    ids: Vec<u32>,
    families: Vec<Family>,
    dim: usize,
    data: Vec<f64>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Index {
    version: u32,
    ids: Vec<u32>,
    families: Vec<Family>,
    provenance: Provenance,
}

impl EmbeddingDatabase {
    /// Checks ids are unique and every vector is unit-norm.
    pub fn new(entries: Vec<(u32, Family, Vec<f64>)>, provenance: Provenance) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.2.len());
        if entries.is_empty() || dim == 0 {
            return Err(Error::invalid("database needs at least one non-empty vector"));
        }
        let mut ids = Vec::with_capacity(entries.len());
        let mut families = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dim);
        for (id, family, v) in entries {
            if v.len() != dim {
                return Err(Error::invalid(format!("entry {id} has dimension {}", v.len())));
            }
            ids.push(id);
            families.push(family);
            data.extend(v);
        }
        let db = Self {
            ids,
            families,
            dim,
            data,
            provenance,
        };
        db.validate()?;
        Ok(db)
    }

    fn validate(&self) -> Result<()> {
        let mut sorted = self.ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate instrument id in database"));
        }
        for (i, id) in self.ids.iter().enumerate() {
            let n = l2_norm(self.vector(i));
            if !((n - 1.0).abs() <= UNIT_TOL) {
                return Err(Error::invalid(format!("entry {id} has norm {n}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn families(&self) -> &[Family] {
        &self.families
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    pub fn count(&self, family: Option<Family>) -> usize {
        match family {
            None => self.len(),
            Some(f) => self.families.iter().filter(|&&x| x == f).count(),
        }
    }

    /// Cosine distance from `q` to entry `i`, clamped to `[0, 2]`.
    pub(crate) fn distance(&self, q_unit: &[f64], i: usize) -> f64 {
        (1.0 - dot(q_unit, self.vector(i))).clamp(0.0, 2.0)
    }

    pub fn to_bin_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.data.len());
        out.extend_from_slice(DB_MAGIC);
        out.extend_from_slice(&DB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn to_index_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(&Index {
            version: DB_VERSION,
            ids: self.ids.clone(),
            families: self.families.clone(),
            provenance: self.provenance.clone(),
        })?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn from_bytes(bin: &[u8], index_json: &[u8]) -> Result<Self> {
        if bin.len() < 24 || &bin[..4] != DB_MAGIC {
            return Err(Error::format("not a database file (bad magic)"));
        }
        let version = u32::from_le_bytes(bin[4..8].try_into().unwrap());
        if version != DB_VERSION {
            return Err(Error::format(format!("unsupported database version {version}")));
        }
        let n = u64::from_le_bytes(bin[8..16].try_into().unwrap());
        let dim = u64::from_le_bytes(bin[16..24].try_into().unwrap());
        let expected = n
            .checked_mul(dim)
            .and_then(|c| c.checked_mul(8))
            .and_then(|c| c.checked_add(24));
        if expected != Some(bin.len() as u64) {
            return Err(Error::format("database size does not match its header"));
        }
        let index: Index = serde_json::from_slice(index_json)
            .map_err(|e| Error::format(format!("database index: {e}")))?;
        if index.version != DB_VERSION || index.ids.len() as u64 != n || index.families.len() as u64 != n {
            return Err(Error::format("database index does not match the vectors"));
        }
        if n == 0 || dim == 0 {
            return Err(Error::format("empty database"));
        }
        let data: Vec<f64> = bin[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let db = Self {
            ids: index.ids,
            families: index.families,
            dim: dim as usize,
            data,
            provenance: index.provenance,
        };
        db.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(db)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(DB_BIN), self.to_bin_bytes())?;
        std::fs::write(dir.join(DB_INDEX), self.to_index_json()?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        Self::from_bytes(&std::fs::read(dir.join(DB_BIN))?, &std::fs::read(dir.join(DB_INDEX))?)
    }
}

/// Renders and analyzes one median note per non-augmented instrument, in
/// bank order.
pub fn database_features(
    bank: &PatchBank,
    dists: &FamilyDistributions,
    policy: &MedianNotePolicy,
    frontend: &MelFrontend,
    with_descriptors: bool,
) -> Result<Vec<(u32, Family, SoundFeatures)>> {
    let originals: Vec<&InstrumentPatch> = bank.originals().collect();
    if originals.is_empty() {
        return Err(Error::invalid("bank has no non-augmented instruments"));
    }
    originals
        .par_iter()
        .map(|p| {
            let audio = render_sound(p, &policy.sound(p, dists), frontend.sample_rate())?;
            let rms = audio.rms();
            if rms < crate::audio::SILENCE_RMS {
                return Err(Error::SilentStem {
                    instrument: Some(p.id),
                    rms,
                });
            }
            Ok((p.id, p.family, frontend.analyze(&audio, with_descriptors)?))
        })
        .collect()
}

/// Embeds precomputed database features.
pub fn database_from_features(
    features: &[(u32, Family, SoundFeatures)],
    embedder: &dyn Embedder,
    provenance: Provenance,
) -> Result<EmbeddingDatabase> {
    let entries = features
        .par_iter()
        .map(|(id, family, f)| Ok((*id, *family, embedder.embed(f)?)))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingDatabase::new(entries, provenance)
}

pub fn build_database(
    bank: &PatchBank,
    dists: &FamilyDistributions,
    embedder: &dyn Embedder,
    frontend: &MelFrontend,
    provenance: Provenance,
) -> Result<EmbeddingDatabase> {
    if let Some(p) = embedder.feature_params() {
        if p != frontend.params() {
            return Err(Error::invalid("embedder was trained with different feature params"));
        }
    }
    let feats = database_features(bank, dists, &provenance.policy, frontend, embedder.needs_descriptors())?;
    database_from_features(&feats, embedder, provenance)
}
