use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::database::EmbeddingDatabase;
use super::embedder::Embedder;
use crate::datasetgen::{render_mixture, render_sound, MixtureSpec, SoundSpec};
use crate::dspfeatures::MelFrontend;
use crate::encoder::l2_norm;
use crate::error::{Error, Result};
use crate::synthbank::{Family, PatchBank};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: u32,
    pub family: Family,
    pub distance: f64,
}

/// Ascending distance, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub hits: Vec<Hit>,
}

fn unit_query(db: &EmbeddingDatabase, q: &[f64]) -> Result<Vec<f64>> {
    if q.len() != db.dim() {
        return Err(Error::invalid(format!(
            "query has dimension {}, database {}",
            q.len(),
            db.dim()
        )));
    }
    let n = l2_norm(q);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::invalid("query vector has zero or non-finite norm"));
    }
    Ok(q.iter().map(|v| v / n).collect())
}

fn order(a: (f64, u32), b: (f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Exact k nearest entries by cosine distance, optionally within one family.
pub fn query(db: &EmbeddingDatabase, q: &[f64], k: usize, family: Option<Family>) -> Result<QueryResult> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let u = unit_query(db, q)?;
    let mut hits: Vec<Hit> = (0..db.len())
        .filter(|&i| family.map_or(true, |f| db.families()[i] == f))
        .map(|i| Hit {
            id: db.ids()[i],
            family: db.families()[i],
            distance: db.distance(&u, i),
        })
        .collect();
    if hits.is_empty() {
        return Err(Error::invalid(format!(
            "no database entries for family filter {family:?}"
        )));
    }
    hits.sort_by(|a, b| order((a.distance, a.id), (b.distance, b.id)));
    hits.truncate(k);
    Ok(QueryResult { hits })
}

/// Zero-based rank `true_id` would get in [`query`]'s ordering.
pub fn rank_of(db: &EmbeddingDatabase, q: &[f64], true_id: u32, family: Option<Family>) -> Result<usize> {
    let u = unit_query(db, q)?;
    let pos = db
        .position(true_id)
        .ok_or_else(|| Error::invalid(format!("instrument {true_id} is not in the database")))?;
    if family.is_some_and(|f| db.families()[pos] != f) {
        return Err(Error::invalid(format!("instrument {true_id} is outside the family filter")));
    }
    let target = (db.distance(&u, pos), true_id);
    Ok((0..db.len())
        .filter(|&i| family.map_or(true, |f| db.families()[i] == f))
        .filter(|&i| order((db.distance(&u, i), db.ids()[i]), target) == Ordering::Less)
        .count())
}

/// `k / |filtered db|`, clipped to 1.
pub fn chance_level(db: &EmbeddingDatabase, family: Option<Family>, k: usize) -> Result<f64> {
    let n = db.count(family);
    if n == 0 {
        return Err(Error::invalid("filtered database is empty"));
    }
    Ok((k as f64 / n as f64).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    SingleSource,
    Mixture,
}

/// Mixture queries rank either within the slot's family or over the whole
/// database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureRanking {
    WithinFamily,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyAccuracy {
    pub family: Family,
    pub queries: usize,
    /// One accuracy per entry of the report's `ks`.
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub mode: EvalMode,
    pub ks: Vec<usize>,
    /// Micro average over queries for single sounds, macro average over
    /// families for mixtures.
    pub average: Vec<f64>,
    pub per_family: Vec<FamilyAccuracy>,
    pub queries: usize,
    pub config_hash: String,
}

impl EvalReport {
    pub fn top(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.average[i])
    }

    pub fn family_top(&self, family: Family, k: usize) -> Option<f64> {
        let i = self.ks.iter().position(|&x| x == k)?;
        self.per_family
            .iter()
            .find(|f| f.family == family)
            .map(|f| f.accuracy[i])
    }
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("k values must be positive and strictly increasing"));
    }
    Ok(())
}

struct Tally {
    family: Family,
    queries: usize,
    hits: Vec<usize>,
}

fn tally(outcomes: &[(Family, usize)], ks: &[usize]) -> Vec<Tally> {
    let mut out: Vec<Tally> = Vec::new();
    for &(family, rank) in outcomes {
        let t = match out.iter_mut().position(|t| t.family == family) {
            Some(i) => &mut out[i],
            None => {
                out.push(Tally {
                    family,
                    queries: 0,
                    hits: vec![0; ks.len()],
                });
                out.last_mut().unwrap()
            }
        };
        t.queries += 1;
        for (h, &k) in t.hits.iter_mut().zip(ks) {
            if rank < k {
                *h += 1;
            }
        }
    }
    out.sort_by_key(|t| t.family.index());
    out
}

fn per_family(tallies: &[Tally]) -> Vec<FamilyAccuracy> {
    tallies
        .iter()
        .map(|t| FamilyAccuracy {
            family: t.family,
            queries: t.queries,
            accuracy: t.hits.iter().map(|&h| h as f64 / t.queries as f64).collect(),
        })
        .collect()
}

/// Top-k accuracy of already-embedded single-source queries over the full
/// database.
pub fn evaluate_single_source_embedded(
    db: &EmbeddingDatabase,
    queries: &[(Vec<f64>, u32)],
    ks: &[usize],
    method: &str,
) -> Result<EvalReport> {
    check_ks(ks)?;
    if queries.is_empty() {
        return Err(Error::invalid("no queries"));
    }
    let outcomes = queries
        .par_iter()
        .map(|(q, id)| {
            let pos = db
                .position(*id)
                .ok_or_else(|| Error::invalid(format!("instrument {id} is not in the database")))?;
            Ok((db.families()[pos], rank_of(db, q, *id, None)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let tallies = tally(&outcomes, ks);
    let n = outcomes.len() as f64;
    let average = (0..ks.len())
        .map(|j| tallies.iter().map(|t| t.hits[j]).sum::<usize>() as f64 / n)
        .collect();
    Ok(EvalReport {
        method: method.into(),
        mode: EvalMode::SingleSource,
        ks: ks.to_vec(),
        average,
        per_family: per_family(&tallies),
        queries: outcomes.len(),
        config_hash: db.provenance.config_hash.clone(),
    })
}

/// A mixture query: one embedding per slot, with the true constituent of
/// that slot.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureQuery {
    pub embeddings: Vec<Vec<f64>>,
    pub truth: Vec<(Family, u32)>,
}

pub fn evaluate_mixture_embedded(
    db: &EmbeddingDatabase,
    queries: &[MixtureQuery],
    ranking: MixtureRanking,
    ks: &[usize],
    method: &str,
) -> Result<EvalReport> {
    check_ks(ks)?;
    if queries.is_empty() {
        return Err(Error::invalid("no queries"));
    }
    let outcomes: Vec<Vec<(Family, usize)>> = queries
        .par_iter()
        .map(|q| {
            if q.embeddings.len() != q.truth.len() {
                return Err(Error::invalid("one embedding per mixture slot required"));
            }
            q.embeddings
                .iter()
                .zip(&q.truth)
                .map(|(e, &(family, id))| {
                    if db.count(Some(family)) == 0 {
                        return Err(Error::invalid(format!("family {family} absent from database")));
                    }
                    let filter = match ranking {
                        MixtureRanking::WithinFamily => Some(family),
                        MixtureRanking::Global => None,
                    };
                    Ok((family, rank_of(db, e, id, filter)?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let flat: Vec<(Family, usize)> = outcomes.into_iter().flatten().collect();
    let tallies = tally(&flat, ks);
    let fams = per_family(&tallies);
    let average = (0..ks.len())
        .map(|j| fams.iter().map(|f| f.accuracy[j]).sum::<f64>() / fams.len() as f64)
        .collect();
    Ok(EvalReport {
        method: method.into(),
        mode: EvalMode::Mixture,
        ks: ks.to_vec(),
        average,
        per_family: fams,
        queries: queries.len(),
        config_hash: db.provenance.config_hash.clone(),
    })
}

fn check_frontend(embedder: &dyn Embedder, frontend: &MelFrontend) -> Result<()> {
    match embedder.feature_params() {
        Some(p) if p != frontend.params() => Err(Error::invalid(
            "embedder was trained with different feature params",
        )),
        _ => Ok(()),
    }
}

/// Renders, embeds and ranks single-source test sounds. Each sound's true
/// instrument is its `instrument_id`.
pub fn evaluate_single_source(
    db: &EmbeddingDatabase,
    embedder: &dyn Embedder,
    bank: &PatchBank,
    frontend: &MelFrontend,
    sounds: &[SoundSpec],
    ks: &[usize],
) -> Result<EvalReport> {
    check_frontend(embedder, frontend)?;
    let queries = sounds
        .par_iter()
        .map(|s| {
            let patch = bank
                .get(s.instrument_id)
                .ok_or_else(|| Error::invalid(format!("unknown instrument {}", s.instrument_id)))?;
            let audio = render_sound(patch, s, frontend.sample_rate())?;
            let f = frontend.analyze(&audio, embedder.needs_descriptors())?;
            Ok((embedder.embed(&f)?, s.instrument_id))
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_single_source_embedded(db, &queries, ks, &embedder.method())
}

/// Renders each mixture, embeds it once and ranks every slot.
pub fn evaluate_mixture(
    db: &EmbeddingDatabase,
    embedder: &dyn Embedder,
    bank: &PatchBank,
    frontend: &MelFrontend,
    mixtures: &[MixtureSpec],
    ranking: MixtureRanking,
    ks: &[usize],
) -> Result<EvalReport> {
    check_frontend(embedder, frontend)?;
    let queries = mixtures
        .par_iter()
        .map(|m| {
            let (mix, _) = render_mixture(bank, m, frontend.sample_rate())?;
            let f = frontend.analyze(&mix, embedder.needs_descriptors())?;
            let slots: Vec<Family> = m.components.iter().map(|c| c.family).collect();
            Ok(MixtureQuery {
                embeddings: embedder.embed_mixture(&f, &slots)?,
                truth: m.components.iter().map(|c| (c.family, c.instrument_id)).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    evaluate_mixture_embedded(db, &queries, ranking, ks, &embedder.method())
}
