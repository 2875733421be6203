//! Contrastive and distillation losses over raw (not necessarily unit-norm)
//! embeddings. Similarities are true cosines, so gradients include the
//! normalization Jacobian.

use serde::{Deserialize, Serialize};

use super::mlp::{dot, l2_norm};
use super::targets::{Target, TargetMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    /// `∂L/∂x_i`, one row per input vector.
    pub grad: Vec<Vec<f64>>,
    /// Arguments of every hinge in the loss, empty for smooth losses.
    /// Used to detect kinks during gradient checks.
    pub hinge_args: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// Single sounds anchor, single sounds are positives, anything is a negative.
    SinglesAndPairs,
    /// Only mixtures anchor.
    MixtureAnchored,
    /// Every item anchors with all of its positives and negatives.
    Full,
}

/// Unit vectors, norms and the cosine matrix of a set of embeddings.
struct Cosines {
    unit: Vec<Vec<f64>>,
    norm: Vec<f64>,
    sim: Vec<f64>,
    n: usize,
}

impl Cosines {
    fn new(xs: &[Vec<f64>]) -> Result<Self> {
        let n = xs.len();
        let dim = xs.first().map_or(0, Vec::len);
        if xs.iter().any(|x| x.len() != dim) {
            return Err(Error::invalid("embeddings differ in dimension"));
        }
        let mut unit = Vec::with_capacity(n);
        let mut norm = Vec::with_capacity(n);
        for x in xs {
            let r = l2_norm(x);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Numeric(format!("embedding norm {r}")));
            }
            unit.push(x.iter().map(|v| v / r).collect::<Vec<_>>());
            norm.push(r);
        }
        let mut sim = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s = dot(&unit[i], &unit[j]);
                sim[i * n + j] = s;
                sim[j * n + i] = s;
            }
        }
        Ok(Self { unit, norm, sim, n })
    }

    fn s(&self, i: usize, j: usize) -> f64 {
        self.sim[i * self.n + j]
    }

    /// Chains `g[i][j] = ∂L/∂s_ij` (over ordered pairs) back to the inputs.
    fn backprop(&self, g: &[f64]) -> Vec<Vec<f64>> {
        let n = self.n;
        let dim = self.unit.first().map_or(0, Vec::len);
        let mut grad = vec![vec![0.0; dim]; n];
        for i in 0..n {
            for j in 0..n {
                let gij = g[i * n + j];
                if gij == 0.0 {
                    continue;
                }
                let s = self.s(i, j);
                // ∂s_ij/∂x_i = (u_j − s u_i) / |x_i|, and symmetrically for x_j
                let (ci, cj) = (gij / self.norm[i], gij / self.norm[j]);
                for k in 0..dim {
                    grad[i][k] += ci * (self.unit[j][k] - s * self.unit[i][k]);
                    grad[j][k] += cj * (self.unit[i][k] - s * self.unit[j][k]);
                }
            }
        }
        grad
    }
}

fn check_len(xs: &[Vec<f64>], targets: &TargetMatrix) -> Result<()> {
    if xs.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} embeddings but target matrix has {} rows",
            xs.len(),
            targets.len()
        )));
    }
    Ok(())
}

/// Multi-positive InfoNCE. Each ordered (anchor, positive) pair contributes
/// `−log softmax` over the anchor's positives and negatives; the loss is the
/// mean over all such pairs. Anchors without a positive are skipped.
pub fn infonce_loss(xs: &[Vec<f64>], targets: &TargetMatrix, tau: f64) -> Result<LossOutput> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("temperature {tau} must be > 0")));
    }
    check_len(xs, targets)?;
    let c = Cosines::new(xs)?;
    let n = xs.len();
    let n_pairs: usize = (0..n).map(|a| targets.positives(a).count()).sum();
    if n_pairs == 0 {
        return Err(Error::invalid("no anchor has a positive"));
    }
    let m = n_pairs as f64;
    let mut g = vec![0.0; n * n];
    let mut value = 0.0;
    for a in 0..n {
        let pos: Vec<usize> = targets.positives(a).collect();
        if pos.is_empty() {
            continue;
        }
        let cand: Vec<usize> = (0..n).filter(|&j| targets.get(a, j) != Target::Ignore).collect();
        let logits: Vec<f64> = cand.iter().map(|&j| c.s(a, j) / tau).collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
        let lse = mx + z.ln();
        for &p in &pos {
            value += lse - c.s(a, p) / tau;
            g[a * n + p] -= 1.0 / (tau * m);
        }
        let w = pos.len() as f64 / (tau * m);
        for (&j, l) in cand.iter().zip(&logits) {
            g[a * n + j] += w * (l - lse).exp();
        }
    }
    Ok(LossOutput {
        value: value / m,
        grad: c.backprop(&g),
        hinge_args: Vec::new(),
    })
}

fn is_anchor(targets: &TargetMatrix, a: usize, mode: AnchorMode) -> bool {
    match mode {
        AnchorMode::SinglesAndPairs => !targets.is_mixture(a),
        AnchorMode::MixtureAnchored => targets.is_mixture(a),
        AnchorMode::Full => true,
    }
}

fn admits_positive(targets: &TargetMatrix, p: usize, mode: AnchorMode) -> bool {
    mode != AnchorMode::SinglesAndPairs || !targets.is_mixture(p)
}

/// Number of (anchor, positive, negative) triplets the mode admits.
pub fn count_triplets(targets: &TargetMatrix, mode: AnchorMode) -> usize {
    (0..targets.len())
        .filter(|&a| is_anchor(targets, a, mode))
        .map(|a| {
            let p = targets
                .positives(a)
                .filter(|&p| admits_positive(targets, p, mode))
                .count();
            p * targets.negatives(a).count()
        })
        .sum()
}

/// Mean over admitted triplets of `max(0, d(a,p) − d(a,n) + m)` with
/// `d = 1 − cos`. Hinges at exactly zero take the zero subgradient.
pub fn triplet_loss(xs: &[Vec<f64>], targets: &TargetMatrix, margin: f64, mode: AnchorMode) -> Result<LossOutput> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::invalid(format!("margin {margin} must be >= 0")));
    }
    check_len(xs, targets)?;
    let total = count_triplets(targets, mode);
    if total == 0 {
        return Err(Error::invalid(format!("no valid triplet for anchor mode {mode:?}")));
    }
    let c = Cosines::new(xs)?;
    let n = xs.len();
    let t = total as f64;
    let mut g = vec![0.0; n * n];
    let mut value = 0.0;
    let mut hinge_args = Vec::with_capacity(total);
    for a in (0..n).filter(|&a| is_anchor(targets, a, mode)) {
        let negs: Vec<usize> = targets.negatives(a).collect();
        for p in targets.positives(a).filter(|&p| admits_positive(targets, p, mode)) {
            for &q in &negs {
                // d(a,p) − d(a,q) + m = s(a,q) − s(a,p) + m
                let h = c.s(a, q) - c.s(a, p) + margin;
                hinge_args.push(h);
                if h > 0.0 {
                    value += h;
                    g[a * n + p] -= 1.0 / t;
                    g[a * n + q] += 1.0 / t;
                }
            }
        }
    }
    Ok(LossOutput {
        value: value / t,
        grad: c.backprop(&g),
        hinge_args,
    })
}

/// Mean over slots of `1 − cos(output_k, target_k)`. Targets are frozen and
/// receive no gradient.
pub fn multi_encoder_loss(outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<LossOutput> {
    if outputs.len() != targets.len() || outputs.is_empty() {
        return Err(Error::invalid(format!(
            "{} outputs vs {} frozen targets",
            outputs.len(),
            targets.len()
        )));
    }
    let k = outputs.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(outputs.len());
    for (o, t) in outputs.iter().zip(targets) {
        if o.len() != t.len() {
            return Err(Error::invalid("output and target dimensions differ"));
        }
        let (ro, rt) = (l2_norm(o), l2_norm(t));
        if !(ro > 0.0 && rt > 0.0) {
            return Err(Error::Numeric("zero vector in multi-encoder loss".into()));
        }
        let s = dot(o, t) / (ro * rt);
        value += 1.0 - s;
        grad.push(
            o.iter()
                .zip(t)
                .map(|(ov, tv)| -(tv / rt - s * ov / ro) / (ro * k))
                .collect(),
        );
    }
    Ok(LossOutput {
        value: value / k,
        grad,
        hinge_args: Vec::new(),
    })
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> Result<LossOutput> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::invalid("logits and labels differ in count"));
    }
    let b = logits.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &y) in logits.iter().zip(labels) {
        if y >= row.len() {
            return Err(Error::invalid(format!("label {y} outside {} classes", row.len())));
        }
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        value += lse - row[y];
        grad.push(
            row.iter()
                .enumerate()
                .map(|(c, l)| ((l - lse).exp() - if c == y { 1.0 } else { 0.0 }) / b)
                .collect(),
        );
    }
    Ok(LossOutput {
        value: value / b,
        grad,
        hinge_args: Vec::new(),
    })
}
