use std::borrow::Cow;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gradcheck::Evaluation;
use super::losses::{infonce_loss, multi_encoder_loss, triplet_loss, AnchorMode};
use super::model::{classification_pretext_loss, Classifier, EncoderArch, EncoderParams, MultiEncoderParams};
use super::optim::{Optimizer, OptimizerConfig};
use super::targets::{build_target_matrix, TargetMatrix};
use crate::audio::AudioBuffer;
use crate::datasetgen::{
    build_mixture_batch, build_single_source_batch, mix_stems, render_sound, BatchItem, BatchKey,
    BatchOptions, BatchSpec, FamilyDistributions, FreshSounds, MixtureSpec, PooledSounds,
    SamplingConfig, SoundKind, SoundSource, SoundSpec,
};
use crate::dspfeatures::{fit_normalizer, FeatureParams, MelFrontend};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::synthbank::{Family, InstrumentPatch, PatchBank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Infonce,
    Triplet,
    FullTriplet,
    Classification,
    MultiEncoder,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Infonce => "infonce",
            LossKind::Triplet => "triplet",
            LossKind::FullTriplet => "full_triplet",
            LossKind::Classification => "classification",
            LossKind::MultiEncoder => "multi_encoder",
        }
    }
}

/// Single-source batches hold positive pairs; mixture batches hold
/// mixtures followed by single notes of their constituents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    SingleSource,
    Mixture,
}

/// Sounds drawn once per instrument before training. Both counts zero means
/// every batch renders newly drawn sounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub notes_per_instrument: usize,
    pub stems_per_instrument: usize,
}

impl PoolConfig {
    pub fn is_fresh(&self) -> bool {
        self.notes_per_instrument == 0 && self.stems_per_instrument == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub batch_kind: BatchKind,
    pub optimizer: OptimizerConfig,
    pub learning_rate: f64,
    pub steps: usize,
    /// Items per single-source batch.
    pub batch_size: usize,
    /// Mixtures per mixture batch.
    pub n_mixtures: usize,
    pub temperature: f64,
    pub margin: f64,
    pub hidden: usize,
    pub embed_dim: usize,
    pub seed: u64,
    pub pool: PoolConfig,
    /// Warm-up batches whose items fit the input standardization.
    pub norm_fit_batches: usize,
    pub forbid_augmented_siblings: bool,
    pub log_every: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be >= 0", self.learning_rate));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be > 0", self.temperature));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad(format!("margin {} must be >= 0", self.margin));
        }
        if self.batch_size == 0 || self.batch_size % 2 != 0 {
            return bad(format!("batch size {} must be even and > 0", self.batch_size));
        }
        if self.n_mixtures == 0 || self.hidden == 0 || self.embed_dim == 0 {
            return bad("n_mixtures, hidden and embed_dim must be > 0".into());
        }
        if self.norm_fit_batches == 0 {
            return bad("norm_fit_batches must be > 0".into());
        }
        match (self.loss, self.batch_kind) {
            (LossKind::Classification, BatchKind::Mixture) => {
                bad("classification trains on single-source batches".into())
            }
            (LossKind::MultiEncoder, BatchKind::SingleSource) => {
                bad("multi_encoder trains on mixture batches".into())
            }
            _ => Ok(()),
        }
    }

    pub fn anchor_mode(&self) -> Option<AnchorMode> {
        match (self.loss, self.batch_kind) {
            (LossKind::Triplet, BatchKind::SingleSource) => Some(AnchorMode::SinglesAndPairs),
            (LossKind::Triplet, BatchKind::Mixture) => Some(AnchorMode::MixtureAnchored),
            (LossKind::FullTriplet, _) => Some(AnchorMode::Full),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Encoder(EncoderParams),
    Classifier(Classifier),
    MultiEncoder {
        multi: MultiEncoderParams,
        teacher: EncoderParams,
    },
}

impl TrainedModel {
    pub fn flat(&self) -> Vec<f64> {
        match self {
            TrainedModel::Encoder(e) => e.theta.clone(),
            TrainedModel::Classifier(c) => c.flat(),
            TrainedModel::MultiEncoder { multi, .. } => multi.theta.clone(),
        }
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        match self {
            TrainedModel::Encoder(e) => e.theta.copy_from_slice(flat),
            TrainedModel::Classifier(c) => c.set_flat(flat),
            TrainedModel::MultiEncoder { multi, .. } => multi.theta.copy_from_slice(flat),
        }
    }

    /// The single-sound encoder: the classifier's trunk, or the frozen
    /// teacher of a multi-encoder.
    pub fn single_encoder(&self) -> &EncoderParams {
        match self {
            TrainedModel::Encoder(e) => e,
            TrainedModel::Classifier(c) => &c.encoder,
            TrainedModel::MultiEncoder { teacher, .. } => teacher,
        }
    }

    pub fn features(&self) -> &FeatureParams {
        &self.single_encoder().features
    }
}

/// Pooled Mel vectors and stem audio, precomputed for a sound pool.
struct FeatureCache {
    frontend: MelFrontend,
    pooled: HashMap<u64, Vec<f64>>,
    stems: HashMap<u64, AudioBuffer>,
}

impl FeatureCache {
    fn patch<'b>(bank: &'b PatchBank, id: u32) -> Result<&'b InstrumentPatch> {
        bank.get(id)
            .ok_or_else(|| Error::invalid(format!("unknown instrument {id}")))
    }

    fn render(&self, bank: &PatchBank, spec: &SoundSpec) -> Result<AudioBuffer> {
        render_sound(Self::patch(bank, spec.instrument_id)?, spec, self.frontend.sample_rate())
    }

    fn sound(&self, bank: &PatchBank, spec: &SoundSpec) -> Result<Cow<'_, [f64]>> {
        if let Some(v) = self.pooled.get(&spec.cache_key()) {
            return Ok(Cow::Borrowed(v));
        }
        let audio = self.render(bank, spec)?;
        Ok(Cow::Owned(self.frontend.mel(&audio)?.pooled()))
    }

    fn mixture(&self, bank: &PatchBank, spec: &MixtureSpec) -> Result<Vec<f64>> {
        spec.validate()?;
        let mut stems = Vec::with_capacity(spec.components.len());
        for c in &spec.components {
            stems.push(match self.stems.get(&c.stem.cache_key()) {
                Some(a) => Cow::Borrowed(a),
                None => Cow::Owned(self.render(bank, &c.stem)?),
            });
        }
        let stems: Vec<AudioBuffer> = stems.into_iter().map(Cow::into_owned).collect();
        let mix = mix_stems(&stems).map_err(|e| match e {
            Error::SilentStem { rms, .. } => Error::SilentStem {
                instrument: spec
                    .components
                    .iter()
                    .zip(&stems)
                    .find(|(_, s)| s.rms() == rms)
                    .map(|(c, _)| c.instrument_id),
                rms,
            },
            e => e,
        })?;
        Ok(self.frontend.mel(&mix)?.pooled())
    }

    fn item(&self, bank: &PatchBank, item: &BatchItem) -> Result<Vec<f64>> {
        match item {
            BatchItem::Sound { spec, .. } => Ok(self.sound(bank, spec)?.into_owned()),
            BatchItem::Mixture { spec } => self.mixture(bank, spec),
        }
    }
}

enum Source<'a> {
    Fresh(FreshSounds<'a>),
    Pooled(PooledSounds),
}

/// Everything training needs besides the config: the instruments, the
/// sound source and cached features.
pub struct TrainingData<'a> {
    pub bank: &'a PatchBank,
    pub candidates: Vec<&'a InstrumentPatch>,
    pub slots: Vec<Family>,
    pub batch_kind: BatchKind,
    source: Source<'a>,
    cache: FeatureCache,
}

const POOL_STREAM: u64 = 0x9001;
const BATCH_STREAM: u64 = 0xba7c;
const NORM_STREAM: u64 = 0x4f12;

#[allow(clippy::too_many_arguments)]
impl<'a> TrainingData<'a> {
    /// Draws the sound pool (if any) with `seed` and renders it once.
    pub fn prepare(
        bank: &'a PatchBank,
        candidate_ids: &[u32],
        dists: &'a FamilyDistributions,
        sampling: &'a SamplingConfig,
        features: &FeatureParams,
        sample_rate: u32,
        slots: &[Family],
        batch_kind: BatchKind,
        pool: &PoolConfig,
        seed: u64,
    ) -> Result<Self> {
        sampling.validate()?;
        let frontend = MelFrontend::new(features.clone(), sample_rate)?;
        let mut candidates = Vec::with_capacity(candidate_ids.len());
        for &id in candidate_ids {
            candidates.push(FeatureCache::patch(bank, id)?);
        }
        candidates.sort_by_key(|p| p.id);
        candidates.dedup_by_key(|p| p.id);
        if candidates.len() < 2 {
            return Err(Error::invalid("training needs at least two instruments"));
        }
        let fresh = FreshSounds {
            dists,
            cfg: sampling,
            sample_rate,
        };
        let mut cache = FeatureCache {
            frontend,
            pooled: HashMap::new(),
            stems: HashMap::new(),
        };
        let source = if pool.is_fresh() {
            Source::Fresh(fresh)
        } else {
            let drawn: Vec<(u32, Vec<SoundSpec>, Vec<SoundSpec>)> = candidates
                .par_iter()
                .map(|p| {
                    let mut rng = seeded(derive_seed(seed, &[POOL_STREAM, p.id as u64]));
                    let notes = (0..pool.notes_per_instrument)
                        .map(|_| fresh.single_note(p, &mut rng))
                        .collect::<Result<Vec<_>>>()?;
                    let stems = (0..pool.stems_per_instrument)
                        .map(|_| fresh.stem(p, &mut rng))
                        .collect::<Result<Vec<_>>>()?;
                    Ok((p.id, notes, stems))
                })
                .collect::<Result<_>>()?;
            let keep_audio = batch_kind == BatchKind::Mixture;
            let specs: Vec<&SoundSpec> = drawn.iter().flat_map(|(_, n, s)| n.iter().chain(s)).collect();
            let rendered: Vec<(u64, Vec<f64>, Option<AudioBuffer>)> = specs
                .par_iter()
                .map(|spec| {
                    let audio = cache.render(bank, spec)?;
                    let pooled = cache.frontend.mel(&audio)?.pooled();
                    let keep = keep_audio && spec.kind == SoundKind::Score;
                    Ok((spec.cache_key(), pooled, keep.then_some(audio)))
                })
                .collect::<Result<_>>()?;
            for (key, pooled, audio) in rendered {
                cache.pooled.insert(key, pooled);
                if let Some(a) = audio {
                    cache.stems.insert(key, a);
                }
            }
            let mut pooled = PooledSounds {
                p_single_note: sampling.p_single_note,
                ..PooledSounds::default()
            };
            for (id, notes, stems) in drawn {
                pooled.notes.insert(id, notes);
                pooled.stems.insert(id, stems);
            }
            Source::Pooled(pooled)
        };
        Ok(Self {
            bank,
            candidates,
            slots: slots.to_vec(),
            batch_kind,
            source,
            cache,
        })
    }

    fn source(&self) -> &dyn SoundSource {
        match &self.source {
            Source::Fresh(f) => f,
            Source::Pooled(p) => p,
        }
    }

    pub fn frontend(&self) -> &MelFrontend {
        &self.cache.frontend
    }

    /// Batch `index` of the stream keyed by `seed`.
    pub fn batch(&self, cfg: &TrainConfig, seed: u64, index: u64) -> Result<BatchSpec> {
        let key = BatchKey { seed, index };
        let opts = BatchOptions {
            forbid_augmented_siblings: cfg.forbid_augmented_siblings,
        };
        match self.batch_kind {
            BatchKind::SingleSource => {
                build_single_source_batch(&self.candidates, self.source(), cfg.batch_size, key, &opts)
            }
            BatchKind::Mixture => build_mixture_batch(
                &self.candidates,
                self.source(),
                cfg.n_mixtures,
                &self.slots,
                key,
                &opts,
            ),
        }
    }

    /// Pooled Mel vector of every batch item, in order.
    pub fn item_features(&self, batch: &BatchSpec) -> Result<Vec<Vec<f64>>> {
        batch.items.iter().map(|it| self.cache.item(self.bank, it)).collect()
    }

    pub fn sound_features(&self, spec: &SoundSpec) -> Result<Vec<f64>> {
        Ok(self.cache.sound(self.bank, spec)?.into_owned())
    }

    pub fn mixture_features(&self, spec: &MixtureSpec) -> Result<Vec<f64>> {
        self.cache.mixture(self.bank, spec)
    }

    /// Class index of every candidate, by ascending id.
    pub fn class_of(&self, id: u32) -> Option<usize> {
        self.candidates.binary_search_by_key(&id, |p| p.id).ok()
    }
}

/// Loss and flat gradient of an encoder on one batch of pooled inputs.
pub fn contrastive_objective(
    enc: &EncoderParams,
    theta: &[f64],
    inputs: &[Vec<f64>],
    targets: &TargetMatrix,
    loss: LossKind,
    mode: Option<AnchorMode>,
    temperature: f64,
    margin: f64,
) -> Result<Evaluation> {
    let fwds = inputs
        .iter()
        .map(|x| enc.forward_with(theta, x))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<Vec<f64>> = fwds.iter().map(|f| f.raw().to_vec()).collect();
    let out = match loss {
        LossKind::Infonce => infonce_loss(&raw, targets, temperature)?,
        LossKind::Triplet | LossKind::FullTriplet => {
            let mode = mode.ok_or_else(|| Error::invalid("triplet loss needs an anchor mode"))?;
            triplet_loss(&raw, targets, margin, mode)?
        }
        other => return Err(Error::invalid(format!("{} is not a contrastive loss", other.as_str()))),
    };
    let mut grad = vec![0.0; theta.len()];
    for (f, d) in fwds.iter().zip(&out.grad) {
        enc.backward_with(theta, f, d, &mut grad);
    }
    Ok(Evaluation {
        value: out.value,
        grad,
        hinge_args: out.hinge_args,
    })
}

/// Mean multi-encoder loss over mixtures, each against its frozen stem
/// embeddings in slot order.
pub fn multi_encoder_objective(
    multi: &MultiEncoderParams,
    theta: &[f64],
    mixtures: &[Vec<f64>],
    targets: &[Vec<Vec<f64>>],
) -> Result<Evaluation> {
    if mixtures.len() != targets.len() || mixtures.is_empty() {
        return Err(Error::invalid("one target set per mixture required"));
    }
    let b = mixtures.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for (x, t) in mixtures.iter().zip(targets) {
        let f = multi.forward_with(theta, x)?;
        let out = multi_encoder_loss(&f.raw(), t)?;
        value += out.value / b;
        let scaled: Vec<Vec<f64>> = out
            .grad
            .iter()
            .map(|g| g.iter().map(|v| v / b).collect())
            .collect();
        multi.backward_with(theta, &f, &scaled, &mut grad);
    }
    Ok(Evaluation {
        value,
        grad,
        hinge_args: Vec::new(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub initial: TrainedModel,
    /// Loss before each optimizer step.
    pub loss_trace: Vec<f64>,
}

fn fit_input_norm(cfg: &TrainConfig, data: &TrainingData) -> Result<crate::dspfeatures::Normalizer> {
    let seed = derive_seed(cfg.seed, &[NORM_STREAM]);
    let mut rows = Vec::new();
    for i in 0..cfg.norm_fit_batches {
        let batch = data.batch(cfg, seed, i as u64)?;
        rows.extend(data.item_features(&batch)?);
    }
    fit_normalizer(&rows)
}

/// Runs `cfg.steps` optimizer updates. Multi-encoder training requires the
/// frozen single-source `teacher`.
pub fn train(cfg: &TrainConfig, data: &TrainingData, teacher: Option<&EncoderParams>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.batch_kind != data.batch_kind {
        return Err(Error::invalid("training data was prepared for another batch kind"));
    }
    let features = data.frontend().params().clone();
    let arch = EncoderArch::for_features(&features, cfg.hidden, cfg.embed_dim);
    let init_seed = derive_seed(cfg.seed, &[0x1a17]);
    let initial = match cfg.loss {
        LossKind::MultiEncoder => {
            let teacher = teacher.ok_or_else(|| Error::invalid("multi_encoder training needs a teacher"))?;
            if teacher.features != features {
                return Err(Error::invalid("teacher uses different feature params"));
            }
            TrainedModel::MultiEncoder {
                multi: MultiEncoderParams::from_teacher(teacher, data.slots.clone())?,
                teacher: teacher.clone(),
            }
        }
        loss => {
            let norm = fit_input_norm(cfg, data)?;
            let enc = EncoderParams::init(arch, features, Some(norm), init_seed)?;
            if loss == LossKind::Classification {
                TrainedModel::Classifier(Classifier::init(enc, data.candidates.len(), init_seed)?)
            } else {
                TrainedModel::Encoder(enc)
            }
        }
    };
    let mut model = initial.clone();
    let mut flat = model.flat();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, flat.len());
    let batch_seed = derive_seed(cfg.seed, &[BATCH_STREAM]);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let batch = data.batch(cfg, batch_seed, step as u64)?;
        let eval = step_objective(cfg, data, &model, &flat, &batch)?;
        if !eval.value.is_finite() || eval.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "{} loss diverged at step {step}: value {}, last finite loss {:?}",
                cfg.loss.as_str(),
                eval.value,
                trace.last()
            )));
        }
        trace.push(eval.value);
        opt.step(&mut flat, &eval.grad);
        if cfg.log_every > 0 && (step + 1) % cfg.log_every == 0 {
            let k = cfg.log_every.min(trace.len());
            let recent = trace[trace.len() - k..].iter().sum::<f64>() / k as f64;
            log::info!("{} step {}/{}: mean loss {recent:.5}", cfg.loss.as_str(), step + 1, cfg.steps);
        }
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("parameters became non-finite".into()));
    }
    model.set_flat(&flat);
    Ok(TrainOutcome {
        model,
        initial,
        loss_trace: trace,
    })
}

fn step_objective(
    cfg: &TrainConfig,
    data: &TrainingData,
    model: &TrainedModel,
    flat: &[f64],
    batch: &BatchSpec,
) -> Result<Evaluation> {
    match model {
        TrainedModel::Encoder(enc) => {
            let targets = build_target_matrix(batch)?;
            let inputs = data.item_features(batch)?;
            contrastive_objective(
                enc,
                flat,
                &inputs,
                &targets,
                cfg.loss,
                cfg.anchor_mode(),
                cfg.temperature,
                cfg.margin,
            )
        }
        TrainedModel::Classifier(c) => {
            let inputs = data.item_features(batch)?;
            let labels = batch
                .instrument_multiset()
                .iter()
                .map(|&id| {
                    data.class_of(id)
                        .ok_or_else(|| Error::invalid(format!("instrument {id} has no class")))
                })
                .collect::<Result<Vec<_>>>()?;
            let (value, grad) = classification_pretext_loss(c, flat, &inputs, &labels)?;
            Ok(Evaluation {
                value,
                grad,
                hinge_args: Vec::new(),
            })
        }
        TrainedModel::MultiEncoder { multi, teacher } => {
            let mut mixtures = Vec::new();
            let mut targets = Vec::new();
            for item in &batch.items {
                if let BatchItem::Mixture { spec } = item {
                    mixtures.push(data.mixture_features(spec)?);
                    let t = spec
                        .components
                        .iter()
                        .map(|c| teacher.embed_pooled(&data.sound_features(&c.stem)?))
                        .collect::<Result<Vec<_>>>()?;
                    targets.push(t);
                }
            }
            multi_encoder_objective(multi, flat, &mixtures, &targets)
        }
    }
}
