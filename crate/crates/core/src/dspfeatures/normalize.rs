use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension z-scoring stats (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Dimensions whose variance was zero; their std was replaced by 1.
    pub constant_dims: Vec<usize>,
}

impl Normalizer {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fits zero-mean, unit-variance stats over `rows`.
pub fn fit_normalizer<R: AsRef<[f64]>>(rows: &[R]) -> Result<Normalizer> {
    if rows.len() < 2 {
        return Err(Error::invalid("need at least two vectors to fit a normalizer"));
    }
    let dim = rows[0].as_ref().len();
    if rows.iter().any(|r| r.as_ref().len() != dim) {
        return Err(Error::invalid("vectors differ in dimension"));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.as_ref()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let mut constant_dims = Vec::new();
    let std = var
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let s = (v / n).sqrt();
            if s > 1e-12 * mean[j].abs().max(1.0) {
                s
            } else {
                log::warn!("descriptor dimension {j} has zero variance; using std 1");
                constant_dims.push(j);
                1.0
            }
        })
        .collect();
    Ok(Normalizer {
        mean,
        std,
        constant_dims,
    })
}
