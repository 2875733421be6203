//! Fully connected stack over a flat parameter slice.
//!
//! Layer `l` stores its weights (`out × in`, row-major) followed by its
//! biases. Hidden layers use tanh; the last layer is linear unless
//! `final_tanh` is set.

use rand::Rng as _;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub final_tanh: bool,
}

/// Post-activation outputs of every layer, input included.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, final_tanh: bool) -> Self {
        assert!(sizes.len() >= 2);
        Self { sizes, final_tanh }
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn is_tanh(&self, layer: usize) -> bool {
        layer + 1 < self.n_layers() || self.final_tanh
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.n_params());
        for w in self.sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            theta.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)));
            theta.extend(std::iter::repeat(0.0).take(fan_out));
        }
        theta
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> MlpCache {
        debug_assert_eq!(theta.len(), self.n_params());
        debug_assert_eq!(x.len(), self.input_dim());
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &theta[off..off + n_in * n_out];
            let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let input = &acts[l];
            let tanh = self.is_tanh(l);
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let z = b[o] + dot(row, input);
                    if tanh {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        MlpCache { acts }
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂output`; returns `∂L/∂input`.
    pub fn backward(&self, theta: &[f64], cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut offsets = Vec::with_capacity(self.n_layers());
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if self.is_tanh(l) {
                for (d, y) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let off = offsets[l];
            let input = &cache.acts[l];
            let w = &theta[off..off + n_in * n_out];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut d_in = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for (g, x) in grow.iter_mut().zip(input) {
                    *g += d * x;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for (di, wv) in d_in.iter_mut().zip(row) {
                    *di += d * wv;
                }
            }
            delta = d_in;
        }
        delta
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn param_count() {
        let m = Mlp::new(vec![4, 3, 2], false);
        assert_eq!(m.n_params(), 4 * 3 + 3 + 3 * 2 + 2);
        assert_eq!(m.init(&mut seeded(0)).len(), m.n_params());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = Mlp::new(vec![5, 4, 3], true);
        let mut rng = seeded(8);
        let theta = m.init(&mut rng);
        let x: Vec<f64> = (0..5).map(|i| (i as f64 * 0.7).sin()).collect();
        let w: Vec<f64> = vec![0.3, -1.2, 0.8];
        let loss = |t: &[f64], x: &[f64]| dot(m.forward(t, x).output(), &w);
        let cache = m.forward(&theta, &x);
        let mut grad = vec![0.0; m.n_params()];
        let dx = m.backward(&theta, &cache, &w, &mut grad);
        let eps = 1e-6;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += eps;
            let mut tm = theta.clone();
            tm[i] -= eps;
            let num = (loss(&tp, &x) - loss(&tm, &x)) / (2.0 * eps);
            assert!((num - grad[i]).abs() < 1e-8, "param {i}: {num} vs {}", grad[i]);
        }
        for i in 0..5 {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let num = (loss(&theta, &xp) - loss(&theta, &xm)) / (2.0 * eps);
            assert!((num - dx[i]).abs() < 1e-8);
        }
    }
}
