use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::datasetgen::{BatchItem, BatchSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Positive,
    Negative,
    Ignore,
}

/// Pairwise labels of a batch, plus which items are mixtures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetMatrix {
    n: usize,
    data: Vec<Target>,
    is_mixture: Vec<bool>,
}

impl TargetMatrix {
    /// All off-diagonal entries negative.
    pub fn new(n: usize, is_mixture: Vec<bool>) -> Self {
        assert_eq!(is_mixture.len(), n);
        let mut data = vec![Target::Negative; n * n];
        for i in 0..n {
            data[i * n + i] = Target::Ignore;
        }
        Self {
            n,
            data,
            is_mixture,
        }
    }

    /// Single-source labels from instrument ids.
    pub fn from_labels(labels: &[u32]) -> Self {
        let n = labels.len();
        let mut m = Self::new(n, vec![false; n]);
        for i in 0..n {
            for j in 0..n {
                if i != j && labels[i] == labels[j] {
                    m.data[i * n + j] = Target::Positive;
                }
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Target {
        self.data[i * self.n + j]
    }

    /// Sets `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, t: Target) {
        self.data[i * self.n + j] = t;
        self.data[j * self.n + i] = t;
    }

    pub fn is_mixture(&self, i: usize) -> bool {
        self.is_mixture[i]
    }

    pub fn positives(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(a, j) == Target::Positive)
    }

    pub fn negatives(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(a, j) == Target::Negative)
    }

    /// Unordered positive pairs.
    pub fn count_positive_pairs(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j) == Target::Positive)
            .count()
    }

    pub fn count_negative_pairs(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j) == Target::Negative)
            .count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Reorders items so that new item `k` is old item `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut out = Self::new(n, perm.iter().map(|&p| self.is_mixture[p]).collect());
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = self.get(perm[i], perm[j]);
            }
        }
        out
    }
}

/// Labels a batch:
/// - mixture vs its own constituent's single sound: positive;
/// - mixture vs any other single sound: negative;
/// - mixture vs mixture: negative;
/// - single vs single: positive iff same instrument;
/// - diagonal: ignore.
pub fn build_target_matrix(batch: &BatchSpec) -> Result<TargetMatrix> {
    let mut seen = HashSet::new();
    for item in &batch.items {
        if let BatchItem::Mixture { spec } = item {
            for id in spec.instrument_ids() {
                if !seen.insert(id) {
                    return Err(Error::invalid(format!(
                        "instrument {id} appears in more than one mixture"
                    )));
                }
            }
        }
    }
    let n = batch.len();
    let mut m = TargetMatrix::new(n, batch.items.iter().map(BatchItem::is_mixture).collect());
    for i in 0..n {
        for j in i + 1..n {
            let t = match (&batch.items[i], &batch.items[j]) {
                (BatchItem::Sound { spec: a, .. }, BatchItem::Sound { spec: b, .. }) => {
                    if a.instrument_id == b.instrument_id {
                        Target::Positive
                    } else {
                        Target::Negative
                    }
                }
                (BatchItem::Mixture { spec }, BatchItem::Sound { spec: s, .. })
                | (BatchItem::Sound { spec: s, .. }, BatchItem::Mixture { spec }) => {
                    if spec.contains(s.instrument_id) {
                        Target::Positive
                    } else {
                        Target::Negative
                    }
                }
                (BatchItem::Mixture { .. }, BatchItem::Mixture { .. }) => Target::Negative,
            };
            m.set(i, j, t);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasetgen::{MixtureComponent, MixtureSpec, Role, SoundSpec};
    use crate::synthbank::{Family, NoteEvent};

    fn single(id: u32) -> BatchItem {
        BatchItem::Sound {
            role: Role::Anchor,
            spec: SoundSpec::single_note(id, NoteEvent::new(60, 100, 0.0, 0.5), 1.0),
        }
    }

    fn mixture(ids: &[u32]) -> BatchItem {
        BatchItem::Mixture {
            spec: MixtureSpec {
                components: ids
                    .iter()
                    .map(|&id| MixtureComponent {
                        instrument_id: id,
                        family: Family::Bass,
                        stem: SoundSpec::single_note(id, NoteEvent::new(60, 100, 0.0, 0.5), 1.0),
                    })
                    .collect(),
            },
        }
    }

    #[test]
    fn single_source_counts() {
        let b = BatchSpec {
            items: vec![single(1), single(1), single(2), single(2)],
        };
        let m = build_target_matrix(&b).unwrap();
        assert_eq!(m.count_positive_pairs(), 2);
        assert_eq!(m.count_negative_pairs(), 4);
        assert!(m.is_symmetric());
        assert_eq!(m.get(0, 0), Target::Ignore);
    }

    #[test]
    fn two_mixtures_of_three() {
        let mut items = vec![mixture(&[1, 2, 3])];
        items.extend([single(1), single(2), single(3)]);
        items.push(mixture(&[4, 5, 6]));
        items.extend([single(4), single(5), single(6)]);
        let m = build_target_matrix(&BatchSpec { items }).unwrap();
        assert_eq!(m.count_positive_pairs(), 6);
        assert_eq!(m.get(0, 4), Target::Negative);
        assert_eq!(m.get(0, 1), Target::Positive);
        assert_eq!(m.get(0, 5), Target::Negative);
        assert_eq!(m.get(1, 2), Target::Negative);
        assert!(m.is_mixture(0) && m.is_mixture(4) && !m.is_mixture(1));
    }

    #[test]
    fn shared_instrument_across_mixtures_is_invalid() {
        let b = BatchSpec {
            items: vec![mixture(&[1, 2]), mixture(&[2, 3])],
        };
        assert!(matches!(build_target_matrix(&b), Err(Error::InvalidArgument(_))));
    }
}
