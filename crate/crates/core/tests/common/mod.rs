//! Naive reference implementations and random fixtures shared by the
//! integration tests. Nothing here calls into the code under test except to
//! build inputs.

#![allow(dead_code)]

use rand::Rng as _;
use timbre_core::datasetgen::{BatchItem, BatchSpec, MixtureComponent, MixtureSpec, Role, SoundSpec};
use timbre_core::encoder::{AnchorMode, Target, TargetMatrix};
use timbre_core::rng::Rng;
use timbre_core::{Family, NoteEvent};

/// A batch item reduced to what the labels depend on.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub mixture: bool,
    pub ids: Vec<u32>,
}

pub fn single(id: u32) -> Item {
    Item {
        mixture: false,
        ids: vec![id],
    }
}

pub fn mixture(ids: &[u32]) -> Item {
    Item {
        mixture: true,
        ids: ids.to_vec(),
    }
}

fn note_spec(id: u32) -> SoundSpec {
    SoundSpec::single_note(id, NoteEvent::new(60, 100, 0.0, 0.5), 1.0)
}

pub fn batch_spec(items: &[Item]) -> BatchSpec {
    BatchSpec {
        items: items
            .iter()
            .map(|it| {
                if it.mixture {
                    BatchItem::Mixture {
                        spec: MixtureSpec {
                            components: it
                                .ids
                                .iter()
                                .map(|&id| MixtureComponent {
                                    instrument_id: id,
                                    family: Family::ALL[id as usize % Family::ALL.len()],
                                    stem: note_spec(id),
                                })
                                .collect(),
                        },
                    }
                } else {
                    BatchItem::Sound {
                        role: Role::Anchor,
                        spec: note_spec(it.ids[0]),
                    }
                }
            })
            .collect(),
    }
}

/// Labels straight from the pairing rules: a pair is positive when the two
/// items are not both mixtures and share an instrument, ignored on the
/// diagonal, negative otherwise.
pub fn oracle_targets(items: &[Item]) -> Vec<Vec<Target>> {
    let n = items.len();
    let mut out = vec![vec![Target::Negative; n]; n];
    for (i, a) in items.iter().enumerate() {
        for (j, b) in items.iter().enumerate() {
            out[i][j] = if i == j {
                Target::Ignore
            } else if a.mixture && b.mixture {
                Target::Negative
            } else if a.ids.iter().any(|x| b.ids.contains(x)) {
                Target::Positive
            } else {
                Target::Negative
            };
        }
    }
    out
}

pub fn to_matrix(t: &[Vec<Target>], items: &[Item]) -> TargetMatrix {
    let n = t.len();
    let mut m = TargetMatrix::new(n, items.iter().map(|i| i.mixture).collect());
    for i in 0..n {
        for j in i + 1..n {
            m.set(i, j, t[i][j]);
        }
    }
    m
}

/// Random batch of `n` items: mixtures of 1 to 4 fresh instruments, each
/// followed by singles of some constituents, mixed with singles drawn from
/// a small pool so that repeated instruments occur.
pub fn random_items(rng: &mut Rng, n: usize) -> Vec<Item> {
    let mut items = Vec::with_capacity(n);
    let mut next_id = 1000;
    let mixture_rate: f64 = rng.gen_range(0.0..0.5);
    while items.len() < n {
        if rng.gen_bool(mixture_rate) {
            let k = rng.gen_range(1..=4);
            let ids: Vec<u32> = (next_id..next_id + k).collect();
            next_id += k;
            items.push(mixture(&ids));
            for &id in &ids {
                if rng.gen_bool(0.7) {
                    items.push(single(id));
                }
            }
        } else {
            items.push(single(rng.gen_range(0..6)));
        }
    }
    items.truncate(n);
    items
}

pub fn random_vectors(rng: &mut Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Mean over (anchor, positive) pairs of
/// `−log(exp(s_ap/τ) / Σ_{j candidate} exp(s_aj/τ))`, where the candidates
/// are every non-ignored item. `None` when no anchor has a positive.
pub fn naive_infonce(xs: &[Vec<f64>], t: &[Vec<Target>], tau: f64) -> Option<f64> {
    let n = xs.len();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..n {
        let mut denom = 0.0;
        for j in 0..n {
            if t[a][j] != Target::Ignore {
                denom += (cos(&xs[a], &xs[j]) / tau).exp();
            }
        }
        for p in 0..n {
            if t[a][p] == Target::Positive {
                let num = (cos(&xs[a], &xs[p]) / tau).exp();
                total += -(num / denom).ln();
                pairs += 1;
            }
        }
    }
    (pairs > 0).then(|| total / pairs as f64)
}

/// Triple loop over (anchor, positive, negative) with cosine distance.
pub fn naive_triplet(xs: &[Vec<f64>], t: &[Vec<Target>], is_mix: &[bool], margin: f64, mode: AnchorMode) -> Option<f64> {
    let n = xs.len();
    let d = |i: usize, j: usize| 1.0 - cos(&xs[i], &xs[j]);
    let mut total = 0.0;
    let mut count = 0usize;
    for a in 0..n {
        let anchor_ok = match mode {
            AnchorMode::SinglesAndPairs => !is_mix[a],
            AnchorMode::MixtureAnchored => is_mix[a],
            AnchorMode::Full => true,
        };
        if !anchor_ok {
            continue;
        }
        for p in 0..n {
            if t[a][p] != Target::Positive {
                continue;
            }
            if mode == AnchorMode::SinglesAndPairs && is_mix[p] {
                continue;
            }
            for q in 0..n {
                if t[a][q] == Target::Negative {
                    total += (d(a, p) - d(a, q) + margin).max(0.0);
                    count += 1;
                }
            }
        }
    }
    (count > 0).then(|| total / count as f64)
}

/// Mean over slots of the cosine distance to the frozen target.
pub fn naive_multi(outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
    outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| 1.0 - cos(o, t))
        .sum::<f64>()
        / outputs.len() as f64
}

/// Random orthogonal matrix from Gram-Schmidt on Gaussian-ish columns.
pub fn random_rotation(rng: &mut Rng, d: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (x, y) in v.iter_mut().zip(u) {
                *x -= p * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.iter().map(|x| x / norm).collect());
        }
    }
    q
}

pub fn rotate(r: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    r.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Ranking by a full scan: every entry's cosine distance, sorted by
/// (distance, id).
pub fn full_scan(entries: &[(u32, Vec<f64>)], q: &[f64]) -> Vec<(u32, f64)> {
    let mut all: Vec<(u32, f64)> = entries
        .iter()
        .map(|(id, v)| (*id, (1.0 - cos(q, v)).clamp(0.0, 2.0)))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all
}
