use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::losses::{softmax_cross_entropy, LossOutput};
use super::mlp::{l2_norm, Mlp, MlpCache};
use crate::dspfeatures::{FeatureParams, MelSpectrogram, Normalizer};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::synthbank::Family;

static ZERO_NORM_FALLBACKS: AtomicU64 = AtomicU64::new(0);

/// How many times [`normalize_embedding`] has hit a zero vector in this
/// process.
pub fn zero_norm_fallbacks() -> u64 {
    ZERO_NORM_FALLBACKS.load(Ordering::Relaxed)
}

/// L2-normalizes `z`. The zero vector maps to the first basis vector.
pub fn normalize_embedding(z: &[f64]) -> Vec<f64> {
    let r = l2_norm(z);
    if r > 0.0 && r.is_finite() {
        return z.iter().map(|v| v / r).collect();
    }
    ZERO_NORM_FALLBACKS.fetch_add(1, Ordering::Relaxed);
    log::warn!("embedding has norm {r}; falling back to e0");
    let mut e = vec![0.0; z.len()];
    if let Some(first) = e.first_mut() {
        *first = 1.0;
    }
    e
}

/// Widest layer accepted anywhere, including classifier heads.
pub const MAX_WIDTH: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderArch {
    pub input_dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
}

impl EncoderArch {
    /// Input is the mean and max of every Mel band.
    pub fn for_features(features: &FeatureParams, hidden: usize, embed_dim: usize) -> Self {
        Self {
            input_dim: 2 * features.n_mels,
            hidden,
            embed_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.input_dim, self.hidden, self.embed_dim];
        if dims.iter().any(|&d| d == 0 || d > MAX_WIDTH) {
            return Err(Error::invalid(format!("architecture {self:?} outside 1..={MAX_WIDTH}")));
        }
        Ok(())
    }
}

fn check_norm(norm: &Normalizer, dim: usize) -> Result<()> {
    if norm.dim() != dim || norm.std.len() != dim {
        return Err(Error::invalid(format!(
            "input normalizer has dimension {}, expected {dim}",
            norm.dim()
        )));
    }
    if norm.std.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("input normalizer has non-positive std"));
    }
    Ok(())
}

fn identity_norm(dim: usize) -> Normalizer {
    Normalizer {
        mean: vec![0.0; dim],
        std: vec![1.0; dim],
        constant_dims: Vec::new(),
    }
}

/// Pooled Mel → standardize → tanh(h) → tanh(h) → linear(d) → L2 normalize.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub arch: EncoderArch,
    pub features: FeatureParams,
    pub input_norm: Normalizer,
    pub theta: Vec<f64>,
}

pub struct EncoderForward {
    cache: MlpCache,
}

impl EncoderForward {
    /// Projection output before L2 normalization.
    pub fn raw(&self) -> &[f64] {
        self.cache.output()
    }
}

impl EncoderParams {
    pub fn init(arch: EncoderArch, features: FeatureParams, input_norm: Option<Normalizer>, seed: u64) -> Result<Self> {
        arch.validate()?;
        let input_norm = input_norm.unwrap_or_else(|| identity_norm(arch.input_dim));
        check_norm(&input_norm, arch.input_dim)?;
        let mlp = Self::mlp_for(&arch);
        let theta = mlp.init(&mut seeded(derive_seed(seed, &[0x1417])));
        Ok(Self {
            arch,
            features,
            input_norm,
            theta,
        })
    }

    fn mlp_for(arch: &EncoderArch) -> Mlp {
        Mlp::new(vec![arch.input_dim, arch.hidden, arch.hidden, arch.embed_dim], false)
    }

    pub fn mlp(&self) -> Mlp {
        Self::mlp_for(&self.arch)
    }

    pub fn n_params(&self) -> usize {
        self.mlp().n_params()
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        check_norm(&self.input_norm, self.arch.input_dim)?;
        if self.theta.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "{} parameters for an architecture of {}",
                self.theta.len(),
                self.n_params()
            )));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite encoder parameter".into()));
        }
        Ok(())
    }

    fn check_input(&self, pooled: &[f64]) -> Result<()> {
        if pooled.len() != self.arch.input_dim {
            return Err(Error::invalid(format!(
                "input has dimension {}, encoder expects {}",
                pooled.len(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    pub fn forward_with(&self, theta: &[f64], pooled: &[f64]) -> Result<EncoderForward> {
        self.check_input(pooled)?;
        let x = self.input_norm.apply(pooled);
        Ok(EncoderForward {
            cache: self.mlp().forward(theta, &x),
        })
    }

    pub fn forward(&self, pooled: &[f64]) -> Result<EncoderForward> {
        self.forward_with(&self.theta, pooled)
    }

    /// Accumulates `∂L/∂θ` given `∂L/∂raw`.
    pub fn backward_with(&self, theta: &[f64], fwd: &EncoderForward, d_raw: &[f64], grad: &mut [f64]) {
        self.mlp().backward(theta, &fwd.cache, d_raw, grad);
    }

    /// Unit-norm embedding of a pooled Mel vector.
    pub fn embed_pooled(&self, pooled: &[f64]) -> Result<Vec<f64>> {
        Ok(normalize_embedding(self.forward(pooled)?.raw()))
    }
}

/// Embeds a log-Mel spectrogram computed with the encoder's feature params.
pub fn encode(params: &EncoderParams, mel: &MelSpectrogram) -> Result<Vec<f64>> {
    if mel.params != params.features {
        return Err(Error::invalid("spectrogram parameters differ from the encoder's"));
    }
    if mel.frames == 0 {
        return Err(Error::invalid("empty spectrogram"));
    }
    params.embed_pooled(&mel.pooled())
}

/// Encoder plus a linear instrument-classification head on the
/// pre-normalization projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub encoder: EncoderParams,
    pub n_classes: usize,
    pub head: Vec<f64>,
}

impl Classifier {
    pub fn init(encoder: EncoderParams, n_classes: usize, seed: u64) -> Result<Self> {
        if !(2..=MAX_WIDTH).contains(&n_classes) {
            return Err(Error::invalid(format!("{n_classes} classes outside 2..={MAX_WIDTH}")));
        }
        let head = Self::head_mlp(encoder.arch.embed_dim, n_classes).init(&mut seeded(derive_seed(seed, &[0xc1a5])));
        Ok(Self {
            encoder,
            n_classes,
            head,
        })
    }

    fn head_mlp(embed_dim: usize, n_classes: usize) -> Mlp {
        Mlp::new(vec![embed_dim, n_classes], false)
    }

    pub fn head_len(&self) -> usize {
        Self::head_mlp(self.encoder.arch.embed_dim, self.n_classes).n_params()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.encoder.theta.clone();
        v.extend_from_slice(&self.head);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let n = self.encoder.theta.len();
        self.encoder.theta.copy_from_slice(&flat[..n]);
        self.head.copy_from_slice(&flat[n..]);
    }
}

/// Softmax cross-entropy of the classification head over a batch of pooled
/// Mel vectors. Returns the loss and the gradient w.r.t. the flat
/// `[encoder θ, head]` vector.
pub fn classification_pretext_loss(
    model: &Classifier,
    flat: &[f64],
    pooled: &[Vec<f64>],
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if labels.iter().any(|&y| y >= model.n_classes) {
        return Err(Error::invalid("label outside the head's classes"));
    }
    let n_enc = model.encoder.n_params();
    let (theta, head) = flat.split_at(n_enc);
    let head_mlp = Classifier::head_mlp(model.encoder.arch.embed_dim, model.n_classes);
    let mut fwds = Vec::with_capacity(pooled.len());
    let mut head_caches = Vec::with_capacity(pooled.len());
    for x in pooled {
        let f = model.encoder.forward_with(theta, x)?;
        head_caches.push(head_mlp.forward(head, f.raw()));
        fwds.push(f);
    }
    let logits: Vec<Vec<f64>> = head_caches.iter().map(|c| c.output().to_vec()).collect();
    let LossOutput { value, grad: d_logits, .. } = softmax_cross_entropy(&logits, labels)?;
    let mut grad = vec![0.0; flat.len()];
    let (g_enc, g_head) = grad.split_at_mut(n_enc);
    for ((f, hc), dl) in fwds.iter().zip(&head_caches).zip(&d_logits) {
        let d_raw = head_mlp.backward(head, hc, dl, g_head);
        model.encoder.backward_with(theta, f, &d_raw, g_enc);
    }
    Ok((value, grad))
}

/// Shared tanh trunk with one linear embedding head per family slot.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiEncoderParams {
    pub arch: EncoderArch,
    pub slots: Vec<Family>,
    pub features: FeatureParams,
    pub input_norm: Normalizer,
    pub theta: Vec<f64>,
}

pub struct MultiForward {
    trunk: MlpCache,
    heads: Vec<MlpCache>,
}

impl MultiForward {
    pub fn raw(&self) -> Vec<Vec<f64>> {
        self.heads.iter().map(|h| h.output().to_vec()).collect()
    }
}

impl MultiEncoderParams {
    fn trunk_mlp(arch: &EncoderArch) -> Mlp {
        Mlp::new(vec![arch.input_dim, arch.hidden, arch.hidden], true)
    }

    fn head_mlp(arch: &EncoderArch) -> Mlp {
        Mlp::new(vec![arch.hidden, arch.embed_dim], false)
    }

    fn n_params_for(arch: &EncoderArch, k: usize) -> usize {
        Self::trunk_mlp(arch).n_params() + k * Self::head_mlp(arch).n_params()
    }

    pub fn n_params(&self) -> usize {
        Self::n_params_for(&self.arch, self.slots.len())
    }

    /// Copies the teacher's hidden layers into the trunk and its projection
    /// into every head, so training starts from the single-source encoder.
    pub fn from_teacher(teacher: &EncoderParams, slots: Vec<Family>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::invalid("multi-encoder needs at least one slot"));
        }
        teacher.validate()?;
        let arch = teacher.arch;
        let n_trunk = Self::trunk_mlp(&arch).n_params();
        let mut theta = teacher.theta[..n_trunk].to_vec();
        for _ in &slots {
            theta.extend_from_slice(&teacher.theta[n_trunk..]);
        }
        Ok(Self {
            arch,
            slots,
            features: teacher.features.clone(),
            input_norm: teacher.input_norm.clone(),
            theta,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        check_norm(&self.input_norm, self.arch.input_dim)?;
        if self.slots.is_empty() || self.theta.len() != self.n_params() {
            return Err(Error::invalid("multi-encoder parameter count mismatch"));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite multi-encoder parameter".into()));
        }
        Ok(())
    }

    pub fn forward_with(&self, theta: &[f64], pooled: &[f64]) -> Result<MultiForward> {
        if pooled.len() != self.arch.input_dim {
            return Err(Error::invalid("input dimension mismatch"));
        }
        let trunk_mlp = Self::trunk_mlp(&self.arch);
        let head_mlp = Self::head_mlp(&self.arch);
        let n_trunk = trunk_mlp.n_params();
        let n_head = head_mlp.n_params();
        let trunk = trunk_mlp.forward(&theta[..n_trunk], &self.input_norm.apply(pooled));
        let heads = (0..self.slots.len())
            .map(|k| {
                let off = n_trunk + k * n_head;
                head_mlp.forward(&theta[off..off + n_head], trunk.output())
            })
            .collect();
        Ok(MultiForward { trunk, heads })
    }

    pub fn backward_with(&self, theta: &[f64], fwd: &MultiForward, d_raw: &[Vec<f64>], grad: &mut [f64]) {
        let trunk_mlp = Self::trunk_mlp(&self.arch);
        let head_mlp = Self::head_mlp(&self.arch);
        let n_trunk = trunk_mlp.n_params();
        let n_head = head_mlp.n_params();
        let mut d_trunk = vec![0.0; self.arch.hidden];
        for (k, (hc, d)) in fwd.heads.iter().zip(d_raw).enumerate() {
            let off = n_trunk + k * n_head;
            let dh = head_mlp.backward(&theta[off..off + n_head], hc, d, &mut grad[off..off + n_head]);
            for (a, b) in d_trunk.iter_mut().zip(dh) {
                *a += b;
            }
        }
        trunk_mlp.backward(&theta[..n_trunk], &fwd.trunk, &d_trunk, &mut grad[..n_trunk]);
    }

    /// One unit-norm embedding per slot, in slot order.
    pub fn embed_slots(&self, pooled: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .forward_with(&self.theta, pooled)?
            .raw()
            .iter()
            .map(|z| normalize_embedding(z))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::losses::multi_encoder_loss;

    fn small() -> EncoderParams {
        let features = FeatureParams {
            n_mels: 4,
            ..FeatureParams::default()
        };
        EncoderParams::init(EncoderArch::for_features(&features, 6, 3), features, None, 5).unwrap()
    }

    #[test]
    fn embeddings_are_unit_norm_and_deterministic() {
        let p = small();
        let x = [0.1, -2.0, 3.0, 0.5, 0.0, 1.0, -1.0, 7.0];
        let a = p.embed_pooled(&x).unwrap();
        let b = p.embed_pooled(&x).unwrap();
        assert_eq!(a, b);
        assert!((l2_norm(&a) - 1.0).abs() < 1e-12);
        assert!(p.embed_pooled(&x[..7]).is_err());
    }

    #[test]
    fn zero_final_layer_falls_back_to_first_basis_vector() {
        let mut p = small();
        let n = p.theta.len();
        let last = 6 * 3 + 3;
        for v in &mut p.theta[n - last..] {
            *v = 0.0;
        }
        let before = zero_norm_fallbacks();
        let e = p.embed_pooled(&[1.0; 8]).unwrap();
        assert_eq!(e, vec![1.0, 0.0, 0.0]);
        assert!(zero_norm_fallbacks() > before);
    }

    #[test]
    fn multi_encoder_from_teacher_reproduces_teacher() {
        let t = small();
        let m = MultiEncoderParams::from_teacher(&t, Family::MIXTURE_SLOTS.to_vec()).unwrap();
        m.validate().unwrap();
        let x = [0.3, 0.1, -0.2, 0.9, 1.0, 0.4, 0.2, -0.7];
        let te = t.embed_pooled(&x).unwrap();
        for e in m.embed_slots(&x).unwrap() {
            for (a, b) in e.iter().zip(&te) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multi_encoder_backward_matches_finite_differences() {
        let t = small();
        let mut m = MultiEncoderParams::from_teacher(&t, vec![Family::Bass, Family::Organ]).unwrap();
        let mut rng = seeded(3);
        m.theta = MultiEncoderParams::trunk_mlp(&m.arch).init(&mut rng);
        for _ in 0..2 {
            m.theta.extend(MultiEncoderParams::head_mlp(&m.arch).init(&mut rng));
        }
        let x = [0.3, 0.1, -0.2, 0.9, 1.0, 0.4, 0.2, -0.7];
        let targets = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]];
        let loss = |th: &[f64]| {
            let f = m.forward_with(th, &x).unwrap();
            multi_encoder_loss(&f.raw(), &targets).unwrap().value
        };
        let f = m.forward_with(&m.theta, &x).unwrap();
        let out = multi_encoder_loss(&f.raw(), &targets).unwrap();
        let mut grad = vec![0.0; m.theta.len()];
        m.backward_with(&m.theta, &f, &out.grad, &mut grad);
        let eps = 1e-6;
        for i in 0..m.theta.len() {
            let mut p = m.theta.clone();
            p[i] += eps;
            let mut q = m.theta.clone();
            q[i] -= eps;
            let num = (loss(&p) - loss(&q)) / (2.0 * eps);
            assert!((num - grad[i]).abs() < 1e-7, "{i}: {num} vs {}", grad[i]);
        }
    }
}
