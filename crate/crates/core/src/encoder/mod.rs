//! Pooled-Mel MLP encoder, contrastive and distillation objectives with
//! hand-written gradients, and the optimizer loop.
//!
//! Embeddings are L2-normalized projections. Losses take the raw
//! projections and compute true cosine similarities, so their gradients
//! already include the normalization.

mod checkpoint;
mod gradcheck;
mod losses;
mod mlp;
mod model;
mod optim;
mod targets;
mod train;

pub use checkpoint::{checkpoint_hash, decode_checkpoint, encode_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, relative_error, Evaluation, GradCheckReport, REL_FLOOR};
pub use losses::{
    count_triplets, infonce_loss, multi_encoder_loss, softmax_cross_entropy, triplet_loss, AnchorMode,
    LossOutput,
};
pub use mlp::{dot, l2_norm, Mlp, MlpCache};
pub use model::{
    classification_pretext_loss, encode, normalize_embedding, zero_norm_fallbacks, Classifier,
    EncoderArch, EncoderForward, EncoderParams, MultiEncoderParams, MultiForward,
};
pub use optim::{Optimizer, OptimizerConfig};
pub use targets::{build_target_matrix, Target, TargetMatrix};
pub use train::{
    contrastive_objective, multi_encoder_objective, train, BatchKind, LossKind, PoolConfig,
    TrainConfig, TrainOutcome, TrainedModel, TrainingData,
};
