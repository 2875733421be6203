use crate::dspfeatures::{fit_normalizer, DescriptorVector, FeatureParams, Normalizer, SoundFeatures};
use crate::encoder::{normalize_embedding, EncoderParams, TrainedModel};
use crate::error::{Error, Result};
use crate::synthbank::Family;

/// Anything that maps analyzed sounds to unit-norm embeddings.
pub trait Embedder: Sync {
    /// Short method name used in reports.
    fn method(&self) -> String;

    fn needs_descriptors(&self) -> bool {
        false
    }

    /// Feature params the embedder was trained with, if it reads Mel input.
    fn feature_params(&self) -> Option<&FeatureParams> {
        None
    }

    fn embed(&self, features: &SoundFeatures) -> Result<Vec<f64>>;

    /// One query embedding per requested family slot. Single-output models
    /// return the same embedding for every slot.
    fn embed_mixture(&self, features: &SoundFeatures, slots: &[Family]) -> Result<Vec<Vec<f64>>> {
        let e = self.embed(features)?;
        Ok(vec![e; slots.len()])
    }
}

impl Embedder for EncoderParams {
    fn method(&self) -> String {
        "encoder".into()
    }

    fn feature_params(&self) -> Option<&FeatureParams> {
        Some(&self.features)
    }

    fn embed(&self, features: &SoundFeatures) -> Result<Vec<f64>> {
        self.embed_pooled(&features.pooled_mel)
    }
}

impl Embedder for TrainedModel {
    fn method(&self) -> String {
        match self {
            TrainedModel::Encoder(_) => "encoder",
            TrainedModel::Classifier(_) => "classification",
            TrainedModel::MultiEncoder { .. } => "multi_encoder",
        }
        .into()
    }

    fn feature_params(&self) -> Option<&FeatureParams> {
        Some(self.features())
    }

    fn embed(&self, features: &SoundFeatures) -> Result<Vec<f64>> {
        self.single_encoder().embed_pooled(&features.pooled_mel)
    }

    fn embed_mixture(&self, features: &SoundFeatures, slots: &[Family]) -> Result<Vec<Vec<f64>>> {
        match self {
            TrainedModel::MultiEncoder { multi, .. } => {
                let all = multi.embed_slots(&features.pooled_mel)?;
                slots
                    .iter()
                    .map(|f| {
                        multi
                            .slots
                            .iter()
                            .position(|s| s == f)
                            .map(|k| all[k].clone())
                            .ok_or_else(|| Error::invalid(format!("multi-encoder has no {f} slot")))
                    })
                    .collect()
            }
            _ => {
                let e = self.embed(features)?;
                Ok(vec![e; slots.len()])
            }
        }
    }
}

/// Handcrafted descriptors, z-scored with stats fitted on the database
/// sounds, compared by cosine.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorEmbedder {
    pub normalizer: Normalizer,
}

impl DescriptorEmbedder {
    pub fn fit(vectors: &[DescriptorVector]) -> Result<Self> {
        let rows: Vec<&[f64]> = vectors.iter().map(|v| v.as_slice()).collect();
        Ok(Self {
            normalizer: fit_normalizer(&rows)?,
        })
    }
}

impl Embedder for DescriptorEmbedder {
    fn method(&self) -> String {
        "descriptors".into()
    }

    fn needs_descriptors(&self) -> bool {
        true
    }

    fn embed(&self, features: &SoundFeatures) -> Result<Vec<f64>> {
        let d = features
            .descriptors
            .as_ref()
            .ok_or_else(|| Error::invalid("descriptor embedder needs descriptor features"))?;
        Ok(normalize_embedding(&self.normalizer.apply(d.as_slice())))
    }
}
