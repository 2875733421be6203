//! Checkpoint layout: `b"TRCK"`, a little-endian `u32` header length, a JSON
//! header, then every parameter block as little-endian `f64` in header
//! order.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{Classifier, EncoderArch, EncoderParams, MultiEncoderParams};
use super::train::{TrainConfig, TrainedModel};
use crate::dspfeatures::{FeatureParams, Normalizer};
use crate::error::{Error, Result};
use crate::synthbank::Family;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TRCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_HEADER: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "block", rename_all = "snake_case", deny_unknown_fields)]
enum Block {
    Encoder {
        arch: EncoderArch,
        features: FeatureParams,
        input_norm: Normalizer,
        len: usize,
    },
    ClassifierHead {
        n_classes: usize,
        len: usize,
    },
    MultiEncoder {
        arch: EncoderArch,
        slots: Vec<Family>,
        features: FeatureParams,
        input_norm: Normalizer,
        len: usize,
    },
}

impl Block {
    fn len(&self) -> usize {
        match self {
            Block::Encoder { len, .. } | Block::ClassifierHead { len, .. } | Block::MultiEncoder { len, .. } => *len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    /// Name of the run that produced the checkpoint.
    pub run: String,
    pub config_hash: String,
    pub step: usize,
    pub train: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    meta: CheckpointMeta,
    blocks: Vec<Block>,
}

fn encoder_block(e: &EncoderParams) -> Block {
    Block::Encoder {
        arch: e.arch,
        features: e.features.clone(),
        input_norm: e.input_norm.clone(),
        len: e.theta.len(),
    }
}

pub fn encode_checkpoint(model: &TrainedModel, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let (blocks, payload): (Vec<Block>, Vec<&[f64]>) = match model {
        TrainedModel::Encoder(e) => (vec![encoder_block(e)], vec![&e.theta]),
        TrainedModel::Classifier(c) => (
            vec![
                encoder_block(&c.encoder),
                Block::ClassifierHead {
                    n_classes: c.n_classes,
                    len: c.head.len(),
                },
            ],
            vec![&c.encoder.theta, &c.head],
        ),
        TrainedModel::MultiEncoder { multi, teacher } => (
            vec![
                Block::MultiEncoder {
                    arch: multi.arch,
                    slots: multi.slots.clone(),
                    features: multi.features.clone(),
                    input_norm: multi.input_norm.clone(),
                    len: multi.theta.len(),
                },
                encoder_block(teacher),
            ],
            vec![&multi.theta, &teacher.theta],
        ),
    };
    let header = serde_json::to_vec(&Header {
        version: CHECKPOINT_VERSION,
        meta: meta.clone(),
        blocks,
    })?;
    let n: usize = payload.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(8 + header.len() + 8 * n);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for block in payload {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(TrainedModel, CheckpointMeta)> {
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::format("not a checkpoint (bad magic)"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if hlen > MAX_HEADER || bytes.len() < 8 + hlen {
        return Err(Error::format("truncated checkpoint header"));
    }
    let header: Header = serde_json::from_slice(&bytes[8..8 + hlen])
        .map_err(|e| Error::format(format!("checkpoint header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {}", header.version)));
    }
    let payload = &bytes[8 + hlen..];
    let total = header
        .blocks
        .iter()
        .try_fold(0usize, |acc, b| acc.checked_add(b.len()))
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format("block lengths overflow"))?;
    if payload.len() != total {
        return Err(Error::format(format!(
            "payload has {} bytes, header declares {total}",
            payload.len()
        )));
    }
    let mut off = 0;
    let mut take = |len: usize| -> Vec<f64> {
        let v = payload[off..off + 8 * len]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += 8 * len;
        v
    };
    let mut blocks = header.blocks.into_iter();
    let encoder = |b: Option<Block>, take: &mut dyn FnMut(usize) -> Vec<f64>| -> Result<EncoderParams> {
        match b {
            Some(Block::Encoder {
                arch,
                features,
                input_norm,
                len,
            }) => {
                let e = EncoderParams {
                    arch,
                    features,
                    input_norm,
                    theta: take(len),
                };
                e.validate().map_err(|err| Error::format(format!("encoder block: {err}")))?;
                Ok(e)
            }
            _ => Err(Error::format("expected an encoder block")),
        }
    };
    let model = match blocks.next() {
        Some(b @ Block::Encoder { .. }) => {
            let enc = encoder(Some(b), &mut take)?;
            match blocks.next() {
                None => TrainedModel::Encoder(enc),
                Some(Block::ClassifierHead { n_classes, len }) => {
                    let c = Classifier {
                        encoder: enc,
                        n_classes,
                        head: take(len),
                    };
                    if !(2..=super::model::MAX_WIDTH).contains(&n_classes) || c.head.len() != c.head_len() || c.head.iter().any(|v| !v.is_finite()) {
                        return Err(Error::format("malformed classifier head"));
                    }
                    TrainedModel::Classifier(c)
                }
                Some(_) => return Err(Error::format("unexpected block after encoder")),
            }
        }
        Some(Block::MultiEncoder {
            arch,
            slots,
            features,
            input_norm,
            len,
        }) => {
            let multi = MultiEncoderParams {
                arch,
                slots,
                features,
                input_norm,
                theta: take(len),
            };
            multi
                .validate()
                .map_err(|e| Error::format(format!("multi-encoder block: {e}")))?;
            let teacher = encoder(blocks.next(), &mut take)?;
            TrainedModel::MultiEncoder { multi, teacher }
        }
        _ => return Err(Error::format("checkpoint has no model block")),
    };
    if blocks.next().is_some() {
        return Err(Error::format("trailing blocks in checkpoint"));
    }
    Ok((model, header.meta))
}

/// Hex sha256 of encoded checkpoint bytes.
pub fn checkpoint_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
