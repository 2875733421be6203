//! Config-driven pipeline steps behind the `timbre` CLI.
//!
//! Artifact layout:
//!
//! - `bank.json`: the instrument bank with splits;
//! - `<runs>/<run>/checkpoint.bin` and `<runs>/<run>/loss.csv`;
//! - `<db>/db.bin` and `<db>/db.json`;
//! - `<reports>/{single,mixture}.{csv,md}`.
//!
//! Query sounds are regenerated from the config on demand, so `gen-data` is
//! only needed to inspect or export audio.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, QuerySet, RunSpec};
use crate::datasetgen::{
    build_mixture_batch, build_single_source_batch, content_path, render_mixture, render_sound,
    write_manifest, BatchItem, BatchKey, BatchOptions, FamilyDistributions, FreshSounds,
    ManifestRecord, MixtureSpec, SoundSource, SoundSpec,
};
use crate::dspfeatures::{DescriptorVector, MelFrontend, SoundFeatures};
use crate::encoder::{
    checkpoint_hash, decode_checkpoint, encode_checkpoint, BatchKind, CheckpointMeta, LossKind,
    TrainOutcome, TrainedModel, TrainingData,
};
use crate::error::{Error, Result};
use crate::retrieval::{
    database_features, database_from_features, evaluate_mixture_embedded,
    evaluate_single_source_embedded, query, DescriptorEmbedder, Embedder, EmbeddingDatabase,
    EvalMode, EvalReport, MixtureQuery, Provenance, QueryResult,
};
use crate::rng::{derive_seed, seeded};
use crate::synthbank::{
    generate_bank, strip_effects, BankFile, Family, InstrumentPatch, PatchBank, Split,
    BANK_FORMAT_VERSION,
};
use crate::AudioBuffer;

pub const BANK_FILE: &str = "bank.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const DATASET_FILE: &str = "dataset.json";
/// Method name of the handcrafted descriptor baseline.
pub const DESCRIPTORS: &str = "descriptors";

const SPLIT_KEY: u64 = 0x5b17;
const SINGLE_QUERY_KEY: u64 = 0x51a9;
const MIXTURE_QUERY_KEY: u64 = 0x3e1d;
const PREVIEW_PAIR_KEY: u64 = 0x9e71;
const PREVIEW_MIX_KEY: u64 = 0x9e72;

/// Instrument counts of a bank, per family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyCount {
    pub family: Family,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub augmented: usize,
}

pub fn bank_summary(file: &BankFile) -> Vec<FamilyCount> {
    let mut out: Vec<FamilyCount> = Vec::new();
    for p in &file.patches {
        let i = match out.iter().position(|c| c.family == p.family) {
            Some(i) => i,
            None => {
                out.push(FamilyCount {
                    family: p.family,
                    train: 0,
                    valid: 0,
                    test: 0,
                    augmented: 0,
                });
                out.len() - 1
            }
        };
        let c = &mut out[i];
        if p.is_augmented() {
            c.augmented += 1;
            continue;
        }
        match file.split_of(p.id) {
            Some(Split::Valid) => c.valid += 1,
            Some(Split::Test) => c.test += 1,
            _ => c.train += 1,
        }
    }
    out
}

/// Which method fills a database or a report row.
#[derive(Debug, Clone, PartialEq)]
pub enum Method<'a> {
    Descriptors,
    Model {
        run: &'a RunSpec,
        model: &'a TrainedModel,
        checkpoint_hash: &'a str,
    },
}

impl Method<'_> {
    /// Name stored in database provenance: the run name or `descriptors`.
    pub fn name(&self) -> &str {
        match self {
            Method::Descriptors => DESCRIPTORS,
            Method::Model { run, .. } => &run.name,
        }
    }

    /// Report row label: the loss name or `descriptors`.
    pub fn label(&self) -> &'static str {
        match self {
            Method::Descriptors => DESCRIPTORS,
            Method::Model { run, .. } => run.loss.as_str(),
        }
    }
}

/// A loaded checkpoint with its run spec.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub run: RunSpec,
    pub model: TrainedModel,
    pub checkpoint_hash: String,
}

impl LoadedRun {
    pub fn method(&self) -> Method<'_> {
        Method::Model {
            run: &self.run,
            model: &self.model,
            checkpoint_hash: &self.checkpoint_hash,
        }
    }
}

/// Analyzed query sounds, reusable across methods.
pub struct SingleQueries {
    pub specs: Vec<SoundSpec>,
    pub features: Vec<SoundFeatures>,
}

pub struct MixtureQueries {
    pub specs: Vec<MixtureSpec>,
    pub features: Vec<SoundFeatures>,
}

/// Database-side features: one median note per original instrument.
pub struct DatabaseFeatures {
    pub entries: Vec<(u32, Family, SoundFeatures)>,
    pub descriptors: DescriptorEmbedder,
}

/// What `gen-data` wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIndex {
    pub config_hash: String,
    /// Manifest file name and record count.
    pub manifests: Vec<(String, usize)>,
    pub audio_files: usize,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    dists: FamilyDistributions,
    frontend: MelFrontend,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            hash: config.hash()?,
            dists: config.distributions()?,
            frontend: MelFrontend::new(config.features, config.sample_rate)?,
            config,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(ExperimentConfig::load(path)?)
    }

    pub fn frontend(&self) -> &MelFrontend {
        &self.frontend
    }

    pub fn distributions(&self) -> &FamilyDistributions {
        &self.dists
    }

    fn fresh(&self) -> FreshSounds<'_> {
        FreshSounds {
            dists: &self.dists,
            cfg: &self.config.dataset.sampling,
            sample_rate: self.config.sample_rate,
        }
    }

    /// Generates the bank, assigns held-out splits per family and appends
    /// the effect-stripped copies of training instruments.
    pub fn generate_bank(&self) -> Result<BankFile> {
        let spec = &self.config.bank;
        let originals = generate_bank(spec.instruments_per_family, &spec.families, self.config.seed)?;
        let mut splits = Vec::with_capacity(originals.len());
        for &family in &spec.families {
            let mut ids: Vec<u32> = originals.iter().filter(|p| p.family == family).map(|p| p.id).collect();
            ids.shuffle(&mut seeded(derive_seed(
                self.config.seed,
                &[SPLIT_KEY, family.index() as u64],
            )));
            for (k, id) in ids.into_iter().enumerate() {
                let split = if k < spec.test_per_family {
                    Split::Test
                } else if k < spec.test_per_family + spec.valid_per_family {
                    Split::Valid
                } else {
                    Split::Train
                };
                splits.push((id, split));
            }
        }
        splits.sort_by_key(|s| s.0);
        let mut patches = originals;
        if spec.augmentation {
            let mut next = patches.iter().map(|p| p.id + 1).max().unwrap_or(0);
            let mut extra = Vec::new();
            for p in &patches {
                let train = splits.binary_search_by_key(&p.id, |s| s.0).map(|i| splits[i].1) == Ok(Split::Train);
                if train && !p.effects.is_empty() {
                    extra.push(strip_effects(p, next));
                    next += 1;
                }
            }
            patches.extend(extra);
        }
        Ok(BankFile {
            version: BANK_FORMAT_VERSION,
            config_hash: self.hash.clone(),
            sample_rate: self.config.sample_rate,
            patches,
            splits,
        })
    }

    /// Checks a bank was produced from this config.
    pub fn check_bank(&self, file: &BankFile) -> Result<PatchBank> {
        if file.config_hash != self.hash {
            return Err(Error::invalid(format!(
                "bank was generated from config {}, not {}",
                file.config_hash, self.hash
            )));
        }
        if file.sample_rate != self.config.sample_rate {
            return Err(Error::invalid("bank sample rate differs from the config"));
        }
        file.bank()
    }

    pub fn load_bank(&self, path: impl AsRef<Path>) -> Result<(BankFile, PatchBank)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::invalid(format!("cannot read bank {}: {e}", path.display())))?;
        let file = BankFile::from_json_bytes(&bytes)?;
        let bank = self.check_bank(&file)?;
        Ok((file, bank))
    }

    /// Training instruments and their augmented copies.
    pub fn training_ids(&self, file: &BankFile) -> Vec<u32> {
        file.patches
            .iter()
            .filter(|p| p.is_augmented() || file.split_of(p.id) == Some(Split::Train))
            .map(|p| p.id)
            .collect()
    }

    fn query_instruments<'b>(&self, file: &BankFile, bank: &'b PatchBank) -> Vec<&'b InstrumentPatch> {
        bank.originals()
            .filter(|p| match self.config.eval.query_set {
                QuerySet::All => true,
                QuerySet::Test => file.split_of(p.id) == Some(Split::Test),
            })
            .collect()
    }

    /// Single-source query sounds, cycling through the query instruments
    /// round-robin across families so every family gets queries.
    pub fn single_query_specs(&self, file: &BankFile, bank: &PatchBank) -> Result<Vec<SoundSpec>> {
        let mut instruments = self.query_instruments(file, bank);
        let mut seen: HashMap<Family, usize> = HashMap::new();
        let mut turn: Vec<usize> = Vec::with_capacity(instruments.len());
        for p in &instruments {
            let n = seen.entry(p.family).or_insert(0);
            turn.push(*n);
            *n += 1;
        }
        let mut order: Vec<usize> = (0..instruments.len()).collect();
        order.sort_by_key(|&i| (turn[i], instruments[i].family.index()));
        instruments = order.into_iter().map(|i| instruments[i]).collect();
        if instruments.is_empty() {
            return Err(Error::invalid("no query instruments"));
        }
        let fresh = self.fresh();
        let mut rng = seeded(derive_seed(self.config.seed, &[SINGLE_QUERY_KEY]));
        (0..self.config.eval.single.queries)
            .map(|i| fresh.sound(instruments[i % instruments.len()], &mut rng))
            .collect()
    }

    /// Query mixtures with one query instrument per slot.
    pub fn mixture_query_specs(&self, file: &BankFile, bank: &PatchBank) -> Result<Vec<MixtureSpec>> {
        let instruments = self.query_instruments(file, bank);
        let fresh = self.fresh();
        let seed = derive_seed(self.config.seed, &[MIXTURE_QUERY_KEY]);
        (0..self.config.eval.mixture.queries as u64)
            .map(|index| {
                let batch = build_mixture_batch(
                    &instruments,
                    &fresh,
                    1,
                    &self.config.dataset.mixture_slots,
                    BatchKey { seed, index },
                    &BatchOptions::default(),
                )?;
                match batch.items.into_iter().next() {
                    Some(BatchItem::Mixture { spec }) => Ok(spec),
                    _ => Err(Error::invalid("mixture batch did not start with a mixture")),
                }
            })
            .collect()
    }

    fn render_patch(&self, bank: &PatchBank, spec: &SoundSpec) -> Result<AudioBuffer> {
        let patch = bank
            .get(spec.instrument_id)
            .ok_or_else(|| Error::invalid(format!("unknown instrument {}", spec.instrument_id)))?;
        render_sound(patch, spec, self.config.sample_rate)
    }

    pub fn single_queries(&self, file: &BankFile, bank: &PatchBank, with_descriptors: bool) -> Result<SingleQueries> {
        let specs = self.single_query_specs(file, bank)?;
        let features = specs
            .par_iter()
            .map(|s| self.frontend.analyze(&self.render_patch(bank, s)?, with_descriptors))
            .collect::<Result<_>>()?;
        Ok(SingleQueries { specs, features })
    }

    pub fn mixture_queries(&self, file: &BankFile, bank: &PatchBank, with_descriptors: bool) -> Result<MixtureQueries> {
        let specs = self.mixture_query_specs(file, bank)?;
        let features = specs
            .par_iter()
            .map(|m| {
                let (mix, _) = render_mixture(bank, m, self.config.sample_rate)?;
                self.frontend.analyze(&mix, with_descriptors)
            })
            .collect::<Result<_>>()?;
        Ok(MixtureQueries { specs, features })
    }

    /// Renders query sets and training previews to content-addressed WAVs
    /// with JSON Lines manifests.
    pub fn write_dataset(&self, file: &BankFile, bank: &PatchBank, out: &Path) -> Result<DatasetIndex> {
        std::fs::create_dir_all(out)?;
        let sr = self.config.sample_rate;
        let fresh = self.fresh();
        let train_ids = self.training_ids(file);
        let train: Vec<&InstrumentPatch> = train_ids.iter().filter_map(|&id| bank.get(id)).collect();
        let opts = BatchOptions {
            forbid_augmented_siblings: self.config.train.forbid_augmented_siblings,
        };

        let mut sets: Vec<(&str, Vec<ManifestRecord>)> = Vec::new();
        let singles = self.single_query_specs(file, bank)?;
        sets.push(("single_queries.jsonl", singles.into_iter().map(sound_record).collect()));
        let mixtures = if self.config.dataset.mixture_slots.is_empty() {
            Vec::new()
        } else {
            self.mixture_query_specs(file, bank)?
        };
        sets.push(("mixture_queries.jsonl", mixtures.into_iter().map(mixture_record).collect()));

        let mut pairs = Vec::new();
        let seed = derive_seed(self.config.seed, &[PREVIEW_PAIR_KEY]);
        for index in 0..self.config.dataset.preview_pairs as u64 {
            let b = build_single_source_batch(&train, &fresh, 2, BatchKey { seed, index }, &opts)?;
            pairs.extend(b.items.into_iter().map(item_record));
        }
        sets.push(("train_pairs.jsonl", pairs));
        let mut mixes = Vec::new();
        if !self.config.dataset.mixture_slots.is_empty() {
            let seed = derive_seed(self.config.seed, &[PREVIEW_MIX_KEY]);
            for index in 0..self.config.dataset.preview_mixtures as u64 {
                let b = build_mixture_batch(
                    &train,
                    &fresh,
                    1,
                    &self.config.dataset.mixture_slots,
                    BatchKey { seed, index },
                    &opts,
                )?;
                mixes.extend(b.items.into_iter().map(item_record));
            }
        }
        sets.push(("train_mixtures.jsonl", mixes));

        let mut written: HashMap<String, ()> = HashMap::new();
        let mut manifests = Vec::new();
        for (name, mut records) in sets {
            let audio: Vec<(String, Vec<u8>)> = records
                .par_iter()
                .map(|r| {
                    let buf = match r {
                        ManifestRecord::Sound { spec, .. } => self.render_patch(bank, spec)?,
                        ManifestRecord::Mixture { spec, .. } => render_mixture(bank, spec, sr)?.0,
                    };
                    let bytes = buf.to_wav_bytes()?;
                    Ok((content_path(&bytes), bytes))
                })
                .collect::<Result<_>>()?;
            for (r, (path, bytes)) in records.iter_mut().zip(audio) {
                if written.insert(path.clone(), ()).is_none() {
                    let full = out.join(&path);
                    if let Some(dir) = full.parent() {
                        std::fs::create_dir_all(dir)?;
                    }
                    std::fs::write(full, bytes)?;
                }
                match r {
                    ManifestRecord::Sound { audio, .. } | ManifestRecord::Mixture { audio, .. } => {
                        *audio = Some(path)
                    }
                }
            }
            std::fs::write(out.join(name), write_manifest(&records)?)?;
            manifests.push((name.to_string(), records.len()));
        }
        let index = DatasetIndex {
            config_hash: self.hash.clone(),
            manifests,
            audio_files: written.len(),
        };
        std::fs::write(out.join(DATASET_FILE), serde_json::to_string_pretty(&index)? + "\n")?;
        Ok(index)
    }

    /// Pooled training sounds for one batch kind, shared by every run of
    /// that kind.
    pub fn training_data<'b>(&'b self, file: &BankFile, bank: &'b PatchBank, kind: BatchKind) -> Result<TrainingData<'b>> {
        TrainingData::prepare(
            bank,
            &self.training_ids(file),
            &self.dists,
            &self.config.dataset.sampling,
            &self.config.features,
            self.config.sample_rate,
            &self.config.dataset.mixture_slots,
            kind,
            &self.config.train.pool,
            self.config.seed,
        )
    }

    /// Trains one run. Multi-encoder runs need their teacher's model.
    pub fn train_run(&self, data: &TrainingData, run: &RunSpec, teacher: Option<&TrainedModel>) -> Result<TrainOutcome> {
        let cfg = self.config.train_config(run);
        let teacher = match (&run.teacher, teacher) {
            (Some(_), Some(t)) => Some(t.single_encoder()),
            (Some(t), None) => return Err(Error::invalid(format!("run '{}' needs teacher '{t}'", run.name))),
            (None, _) => None,
        };
        crate::encoder::train(&cfg, data, teacher)
    }

    pub fn checkpoint_bytes(&self, run: &RunSpec, model: &TrainedModel) -> Result<Vec<u8>> {
        let cfg = self.config.train_config(run);
        encode_checkpoint(
            model,
            &CheckpointMeta {
                run: run.name.clone(),
                config_hash: self.hash.clone(),
                step: cfg.steps,
                train: Some(cfg),
            },
        )
    }

    pub fn loss_csv(&self, trace: &[f64]) -> String {
        let mut out = format!("# config_hash: {}\nstep,loss\n", self.hash);
        for (i, l) in trace.iter().enumerate() {
            writeln!(out, "{},{l}", i + 1).unwrap();
        }
        out
    }

    pub fn run_dir(runs: &Path, run: &str) -> PathBuf {
        runs.join(run)
    }

    /// Writes `checkpoint.bin` and `loss.csv`; returns the checkpoint hash.
    pub fn save_run(&self, runs: &Path, run: &RunSpec, outcome: &TrainOutcome) -> Result<String> {
        let dir = Self::run_dir(runs, &run.name);
        std::fs::create_dir_all(&dir)?;
        let bytes = self.checkpoint_bytes(run, &outcome.model)?;
        std::fs::write(dir.join(CHECKPOINT_FILE), &bytes)?;
        std::fs::write(dir.join(LOSS_FILE), self.loss_csv(&outcome.loss_trace))?;
        Ok(checkpoint_hash(&bytes))
    }

    /// Loads a run's checkpoint and checks it belongs to this config.
    pub fn load_run(&self, runs: &Path, name: &str) -> Result<LoadedRun> {
        let run = self.config.run(name)?.clone();
        let path = Self::run_dir(runs, name).join(CHECKPOINT_FILE);
        let bytes = std::fs::read(&path)
            .map_err(|e| Error::invalid(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let (model, meta) = decode_checkpoint(&bytes)?;
        if meta.config_hash != self.hash || meta.run != name {
            return Err(Error::invalid(format!(
                "{} holds run '{}' of config {}, expected '{name}' of {}",
                path.display(),
                meta.run,
                meta.config_hash,
                self.hash
            )));
        }
        if model.features() != &self.config.features {
            return Err(Error::invalid("checkpoint feature params differ from the config"));
        }
        Ok(LoadedRun {
            run,
            model,
            checkpoint_hash: checkpoint_hash(&bytes),
        })
    }

    pub fn database_features(&self, bank: &PatchBank) -> Result<DatabaseFeatures> {
        let entries = database_features(bank, &self.dists, &self.config.database, &self.frontend, true)?;
        let descs: Vec<DescriptorVector> = entries
            .iter()
            .map(|e| e.2.descriptors.clone().expect("descriptors requested"))
            .collect();
        Ok(DatabaseFeatures {
            descriptors: DescriptorEmbedder::fit(&descs)?,
            entries,
        })
    }

    fn provenance(&self, method: &Method) -> Provenance {
        Provenance {
            method: method.name().to_string(),
            checkpoint_hash: match method {
                Method::Descriptors => String::new(),
                Method::Model { checkpoint_hash, .. } => checkpoint_hash.to_string(),
            },
            config_hash: self.hash.clone(),
            policy: self.config.database,
        }
    }

    fn embedder<'b>(method: &'b Method, db: &'b DatabaseFeatures) -> &'b dyn Embedder {
        match method {
            Method::Descriptors => &db.descriptors,
            Method::Model { model, .. } => *model,
        }
    }

    pub fn build_database(&self, feats: &DatabaseFeatures, method: &Method) -> Result<EmbeddingDatabase> {
        database_from_features(&feats.entries, Self::embedder(method, feats), self.provenance(method))
    }

    /// One report per method over the single-source query set.
    pub fn evaluate_single(&self, feats: &DatabaseFeatures, queries: &SingleQueries, methods: &[Method]) -> Result<Vec<EvalReport>> {
        methods
            .iter()
            .map(|m| {
                let db = self.build_database(feats, m)?;
                let embedder = Self::embedder(m, feats);
                let embedded = queries
                    .features
                    .par_iter()
                    .zip(&queries.specs)
                    .map(|(f, s)| Ok((embedder.embed(f)?, s.instrument_id)))
                    .collect::<Result<Vec<_>>>()?;
                evaluate_single_source_embedded(&db, &embedded, &self.config.eval.ks, m.label())
            })
            .collect()
    }

    pub fn evaluate_mixture(&self, feats: &DatabaseFeatures, queries: &MixtureQueries, methods: &[Method]) -> Result<Vec<EvalReport>> {
        methods
            .iter()
            .map(|m| {
                let db = self.build_database(feats, m)?;
                let embedder = Self::embedder(m, feats);
                let embedded = queries
                    .features
                    .par_iter()
                    .zip(&queries.specs)
                    .map(|(f, spec)| {
                        let slots: Vec<Family> = spec.components.iter().map(|c| c.family).collect();
                        Ok(MixtureQuery {
                            embeddings: embedder.embed_mixture(f, &slots)?,
                            truth: spec.components.iter().map(|c| (c.family, c.instrument_id)).collect(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                evaluate_mixture_embedded(
                    &db,
                    &embedded,
                    self.config.eval.mixture.ranking,
                    &self.config.eval.ks,
                    m.label(),
                )
            })
            .collect()
    }

    /// The methods of one report table: descriptors first if enabled, then
    /// the configured runs in order.
    pub fn table_methods<'b>(&self, mode: EvalMode, runs: &'b [LoadedRun]) -> Result<Vec<Method<'b>>> {
        let (descriptors, names) = match mode {
            EvalMode::SingleSource => (self.config.eval.single.descriptors, &self.config.eval.single.runs),
            EvalMode::Mixture => (self.config.eval.mixture.descriptors, &self.config.eval.mixture.runs),
        };
        let mut out = Vec::new();
        if descriptors {
            out.push(Method::Descriptors);
        }
        for name in names {
            let r = runs
                .iter()
                .find(|r| &r.run.name == name)
                .ok_or_else(|| Error::invalid(format!("run '{name}' was not loaded")))?;
            out.push(r.method());
        }
        Ok(out)
    }

    /// Embeds an arbitrary WAV with a database's method and ranks it.
    pub fn query_audio(
        &self,
        feats: &DatabaseFeatures,
        db: &EmbeddingDatabase,
        method: &Method,
        audio: &AudioBuffer,
        k: usize,
        family: Option<Family>,
    ) -> Result<QueryResult> {
        if db.provenance.config_hash != self.hash || db.provenance.method != method.name() {
            return Err(Error::invalid("database was built from another config or method"));
        }
        if let Method::Model { checkpoint_hash, .. } = method {
            if db.provenance.checkpoint_hash != *checkpoint_hash {
                return Err(Error::invalid("database was built from another checkpoint"));
            }
        }
        if audio.sample_rate != self.config.sample_rate {
            return Err(Error::invalid(format!(
                "WAV sample rate {} differs from the configured {}",
                audio.sample_rate, self.config.sample_rate
            )));
        }
        let embedder = Self::embedder(method, feats);
        let f = self.frontend.analyze(audio, embedder.needs_descriptors())?;
        let e = match family {
            Some(fam) if matches!(method, Method::Model { model: TrainedModel::MultiEncoder { .. }, .. }) => {
                embedder.embed_mixture(&f, &[fam])?.remove(0)
            }
            _ => embedder.embed(&f)?,
        };
        query(db, &e, k, family)
    }
}

/// Run names in training order: teachers before their students.
pub fn training_order(cfg: &ExperimentConfig) -> Vec<&RunSpec> {
    let mut out: Vec<&RunSpec> = cfg.runs.iter().filter(|r| r.teacher.is_none()).collect();
    out.extend(cfg.runs.iter().filter(|r| r.teacher.is_some()));
    out
}

/// True if the loss is a contrastive objective.
pub fn is_contrastive(loss: LossKind) -> bool {
    matches!(loss, LossKind::Infonce | LossKind::Triplet | LossKind::FullTriplet)
}

fn sound_record(spec: SoundSpec) -> ManifestRecord {
    ManifestRecord::Sound { spec, audio: None }
}

fn mixture_record(spec: MixtureSpec) -> ManifestRecord {
    ManifestRecord::Mixture { spec, audio: None }
}

fn item_record(item: BatchItem) -> ManifestRecord {
    match item {
        BatchItem::Sound { spec, .. } => sound_record(spec),
        BatchItem::Mixture { spec } => mixture_record(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::toy(3);
        cfg.bank.instruments_per_family = 10;
        cfg.bank.test_per_family = 2;
        cfg.bank.valid_per_family = 1;
        cfg.bank.augmentation = true;
        cfg
    }

    #[test]
    fn splits_and_augmentation() {
        let exp = Experiment::new(small()).unwrap();
        let file = exp.generate_bank().unwrap();
        let summary = bank_summary(&file);
        assert_eq!(summary.len(), 3);
        for c in &summary {
            assert_eq!((c.train, c.valid, c.test), (7, 1, 2));
            assert!(c.augmented <= 7);
        }
        for p in file.patches.iter().filter(|p| p.is_augmented()) {
            assert_eq!(file.split_of(p.root_id()), Some(Split::Train));
            assert!(p.effects.is_empty());
        }
        let ids = exp.training_ids(&file);
        assert!(ids.iter().all(|&id| file.split_of(id) != Some(Split::Test)));
        assert_eq!(file, exp.generate_bank().unwrap());
    }

    #[test]
    fn test_queries_use_test_instruments() {
        let mut cfg = small();
        cfg.eval.query_set = QuerySet::Test;
        cfg.eval.single.queries = 12;
        cfg.eval.mixture.queries = 3;
        let exp = Experiment::new(cfg).unwrap();
        let file = exp.generate_bank().unwrap();
        let bank = exp.check_bank(&file).unwrap();
        for s in exp.single_query_specs(&file, &bank).unwrap() {
            assert_eq!(file.split_of(s.instrument_id), Some(Split::Test));
        }
        for m in exp.mixture_query_specs(&file, &bank).unwrap() {
            assert_eq!(m.components.len(), 3);
            assert!(m.instrument_ids().all(|id| file.split_of(id) == Some(Split::Test)));
        }
    }

    #[test]
    fn bank_from_other_config_rejected() {
        let exp = Experiment::new(small()).unwrap();
        let file = exp.generate_bank().unwrap();
        let mut other = small();
        other.train.margin = 0.3;
        assert!(Experiment::new(other).unwrap().check_bank(&file).is_err());
    }
}
