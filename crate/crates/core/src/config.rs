//! The experiment config: one JSON document that determines every artifact.
//!
//! Every field is required; unknown fields are rejected. The config hash is
//! the SHA-256 of the canonical (key-sorted, compact) JSON serialization.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasetgen::{FamilyDistributions, FamilyNoteParams, SamplingConfig};
use crate::dspfeatures::FeatureParams;
use crate::encoder::{BatchKind, LossKind, OptimizerConfig, PoolConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::retrieval::{MedianNotePolicy, MixtureRanking};
use crate::synthbank::Family;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSpec {
    pub families: Vec<Family>,
    pub instruments_per_family: usize,
    /// Held-out instruments per family. The rest are training instruments.
    pub valid_per_family: usize,
    pub test_per_family: usize,
    /// Adds an effect-stripped copy of every training instrument that has
    /// effects.
    pub augmentation: bool,
}

/// Shared optimization settings; the loss and batch kind come from each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub optimizer: OptimizerConfig,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub n_mixtures: usize,
    pub temperature: f64,
    pub margin: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    pub pool: PoolConfig,
    pub norm_fit_batches: usize,
    pub forbid_augmented_siblings: bool,
    pub log_every: usize,
}

/// One model to train.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub loss: LossKind,
    pub batch_kind: BatchKind,
    /// Name of the single-source run whose encoder supervises a
    /// multi-encoder. Required for `multi_encoder`, forbidden otherwise.
    pub teacher: Option<String>,
}

/// Which instruments the evaluation queries are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuerySet {
    /// Held-out test instruments only.
    Test,
    /// Every non-augmented instrument, with freshly drawn sounds.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleEvalSpec {
    pub queries: usize,
    pub descriptors: bool,
    pub runs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureEvalSpec {
    pub queries: usize,
    pub ranking: MixtureRanking,
    pub descriptors: bool,
    pub runs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub ks: Vec<usize>,
    pub query_set: QuerySet,
    pub single: SingleEvalSpec,
    pub mixture: MixtureEvalSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub sampling: SamplingConfig,
    pub note_params: Vec<FamilyNoteParams>,
    pub mixture_slots: Vec<Family>,
    /// Written by `gen-data`: training positive pairs and mixtures, for
    /// inspection.
    pub preview_pairs: usize,
    pub preview_mixtures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub sample_rate: u32,
    pub bank: BankSpec,
    pub dataset: DatasetSpec,
    pub features: FeatureParams,
    pub train: TrainSpec,
    pub runs: Vec<RunSpec>,
    pub database: MedianNotePolicy,
    pub eval: EvalSpec,
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::invalid(msg))
}

impl ExperimentConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: Self = serde_json::from_slice(bytes)
            .map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&bytes)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Compact JSON with object keys sorted.
    pub fn canonical_json(&self) -> Result<Vec<u8>> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_vec(&value)?)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?)))
    }

    pub fn distributions(&self) -> Result<FamilyDistributions> {
        FamilyDistributions::from_params(&self.dataset.note_params)
    }

    pub fn run(&self, name: &str) -> Result<&RunSpec> {
        self.runs
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::invalid(format!("no run named '{name}' in config")))
    }

    pub fn train_config(&self, run: &RunSpec) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            loss: run.loss,
            batch_kind: run.batch_kind,
            optimizer: t.optimizer,
            learning_rate: t.learning_rate,
            steps: t.steps,
            batch_size: t.batch_size,
            n_mixtures: t.n_mixtures,
            temperature: t.temperature,
            margin: t.margin,
            hidden: t.hidden,
            embed_dim: t.embed_dim,
            seed: self.seed,
            pool: t.pool,
            norm_fit_batches: t.norm_fit_batches,
            forbid_augmented_siblings: t.forbid_augmented_siblings,
            log_every: t.log_every,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate < 8000 || self.sample_rate > 192_000 {
            return bad(format!("sample rate {} outside [8000, 192000]", self.sample_rate));
        }
        self.features.validate(self.sample_rate)?;
        self.dataset.sampling.validate()?;
        self.distributions()?;

        let b = &self.bank;
        if b.families.is_empty() || b.instruments_per_family == 0 {
            return bad("bank needs at least one family and one instrument per family");
        }
        for (i, f) in b.families.iter().enumerate() {
            if b.families[..i].contains(f) {
                return bad(format!("family {f} listed twice"));
            }
        }
        if b.valid_per_family + b.test_per_family >= b.instruments_per_family {
            return bad("held-out instruments leave no training instruments");
        }

        let slots = &self.dataset.mixture_slots;
        for (i, f) in slots.iter().enumerate() {
            if slots[..i].contains(f) {
                return bad(format!("mixture slot {f} listed twice"));
            }
            if !b.families.contains(f) {
                return bad(format!("mixture slot {f} is not a bank family"));
            }
        }

        for (i, r) in self.runs.iter().enumerate() {
            if r.name.is_empty() || !r.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return bad(format!("run name '{}' must be non-empty [A-Za-z0-9_-]", r.name));
            }
            if self.runs[..i].iter().any(|q| q.name == r.name) {
                return bad(format!("run '{}' defined twice", r.name));
            }
            let tc = self.train_config(r);
            tc.validate()?;
            if r.batch_kind == BatchKind::Mixture && slots.len() < 2 {
                return bad(format!("run '{}' trains on mixtures but fewer than 2 slots are set", r.name));
            }
            match (r.loss, &r.teacher) {
                (LossKind::MultiEncoder, Some(t)) => {
                    let teacher = self.run(t)?;
                    if teacher.batch_kind != BatchKind::SingleSource || teacher.loss == LossKind::MultiEncoder {
                        return bad(format!("teacher '{t}' must be a single-source run"));
                    }
                }
                (LossKind::MultiEncoder, None) => {
                    return bad(format!("multi_encoder run '{}' needs a teacher", r.name));
                }
                (_, Some(_)) => return bad(format!("run '{}' is not a multi_encoder but names a teacher", r.name)),
                (_, None) => {}
            }
        }

        let e = &self.eval;
        if e.ks.is_empty() || e.ks.contains(&0) || e.ks.windows(2).any(|w| w[0] >= w[1]) {
            return bad("eval ks must be positive and strictly increasing");
        }
        if e.query_set == QuerySet::Test && b.test_per_family == 0 {
            return bad("query_set 'test' needs test_per_family > 0");
        }
        let check_table = |runs: &[String], what: &str| -> Result<()> {
            let mut losses = Vec::new();
            for name in runs {
                let r = self.run(name)?;
                if losses.contains(&r.loss) {
                    return bad(format!("{what} table lists two runs with loss {}", r.loss.as_str()));
                }
                losses.push(r.loss);
            }
            Ok(())
        };
        check_table(&e.single.runs, "single")?;
        check_table(&e.mixture.runs, "mixture")?;
        if e.mixture.queries > 0 && slots.is_empty() {
            return bad("mixture queries need mixture slots");
        }
        if !e.single.runs.is_empty() && e.single.queries == 0 {
            return bad("single table has runs but zero queries");
        }
        if !e.mixture.runs.is_empty() && e.mixture.queries == 0 {
            return bad("mixture table has runs but zero queries");
        }
        if !(self.database.note_duration > 0.0 && self.database.note_duration <= self.database.note_length) {
            return bad("database note_duration must be in (0, note_length]");
        }
        Ok(())
    }

    /// Desk-scale setting used by the tests and `configs/toy.json`: three
    /// families of 40 instruments, 3-instrument mixtures, 2000 steps.
    pub fn toy(seed: u64) -> Self {
        let families = Family::MIXTURE_SLOTS.to_vec();
        let run = |name: &str, loss, batch_kind, teacher: Option<&str>| RunSpec {
            name: name.into(),
            loss,
            batch_kind,
            teacher: teacher.map(String::from),
        };
        Self {
            seed,
            sample_rate: 16_000,
            bank: BankSpec {
                families: families.clone(),
                instruments_per_family: 40,
                valid_per_family: 0,
                test_per_family: 0,
                augmentation: false,
            },
            dataset: DatasetSpec {
                sampling: SamplingConfig {
                    note_length: 1.0,
                    note_duration: 0.75,
                    score_length: 2.0,
                    score_density: 1.5,
                    score_note_min: 0.15,
                    score_note_max: 0.8,
                    p_single_note: 0.5,
                },
                note_params: families.iter().map(|&f| FamilyNoteParams::default_for(f)).collect(),
                mixture_slots: families,
                preview_pairs: 8,
                preview_mixtures: 8,
            },
            features: FeatureParams::default(),
            train: TrainSpec {
                optimizer: OptimizerConfig::Adam {
                    beta1: 0.9,
                    beta2: 0.999,
                    eps: 1e-8,
                },
                learning_rate: 1e-3,
                steps: 2000,
                batch_size: 24,
                n_mixtures: 12,
                temperature: 0.1,
                margin: 0.2,
                hidden: 128,
                embed_dim: 64,
                pool: PoolConfig {
                    notes_per_instrument: 6,
                    stems_per_instrument: 6,
                },
                norm_fit_batches: 4,
                forbid_augmented_siblings: false,
                log_every: 500,
            },
            runs: vec![
                run("classification", LossKind::Classification, BatchKind::SingleSource, None),
                run("triplet", LossKind::Triplet, BatchKind::SingleSource, None),
                run("infonce", LossKind::Infonce, BatchKind::SingleSource, None),
                run("mix_triplet", LossKind::Triplet, BatchKind::Mixture, None),
                run("mix_full_triplet", LossKind::FullTriplet, BatchKind::Mixture, None),
                run("mix_infonce", LossKind::Infonce, BatchKind::Mixture, None),
                run("mix_multi_encoder", LossKind::MultiEncoder, BatchKind::Mixture, Some("infonce")),
            ],
            database: MedianNotePolicy {
                note_duration: 0.75,
                note_length: 1.0,
            },
            eval: EvalSpec {
                ks: vec![1, 5],
                query_set: QuerySet::All,
                single: SingleEvalSpec {
                    queries: 300,
                    descriptors: true,
                    runs: vec!["classification".into(), "triplet".into(), "infonce".into()],
                },
                mixture: MixtureEvalSpec {
                    queries: 150,
                    ranking: MixtureRanking::WithinFamily,
                    descriptors: true,
                    runs: vec![
                        "mix_multi_encoder".into(),
                        "mix_triplet".into(),
                        "mix_full_triplet".into(),
                        "mix_infonce".into(),
                    ],
                },
            },
        }
    }
}
