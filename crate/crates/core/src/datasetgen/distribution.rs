use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::synthbank::{Family, NoteEvent};

/// Gate length of database and single-note sounds, in seconds.
pub const DEFAULT_NOTE_DURATION: f64 = 3.0;
/// Total length of single-note sounds, in seconds.
pub const DEFAULT_NOTE_LENGTH: f64 = 4.0;

/// Discrete pitch and velocity marginals of one family. Both histograms are
/// indexed by MIDI value (length 128); velocity 0 always has zero mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyNoteDistribution {
    pub family: Family,
    pub pitch_hist: Vec<f64>,
    pub velocity_hist: Vec<f64>,
}

/// A normal restricted to the integer range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub std: f64,
    pub lo: u8,
    pub hi: u8,
}

const fn tn(mean: f64, std: f64, lo: u8, hi: u8) -> TruncatedNormal {
    TruncatedNormal { mean, std, lo, hi }
}

impl TruncatedNormal {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean.is_finite() && self.std > 0.0 && self.std.is_finite()) {
            return Err(Error::invalid("truncated normal needs a finite mean and std > 0"));
        }
        if self.lo > self.hi || self.hi > 127 {
            return Err(Error::invalid(format!("bad range [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }

    /// Discretized onto 128 MIDI bins and normalized.
    pub fn histogram(&self) -> Vec<f64> {
        let mut h = vec![0.0; 128];
        for v in self.lo..=self.hi {
            let z = (v as f64 - self.mean) / self.std;
            h[v as usize] = (-0.5 * z * z).exp();
        }
        normalize(&mut h);
        h
    }
}

/// Pitch and velocity parameters of one family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyNoteParams {
    pub family: Family,
    pub pitch: TruncatedNormal,
    pub velocity: TruncatedNormal,
}

impl FamilyNoteParams {
    pub fn default_for(family: Family) -> Self {
        let (pitch, velocity) = match family {
            Family::Bass => (tn(38.0, 6.0, 24, 60), tn(95.0, 18.0, 30, 127)),
            Family::Percussion => (tn(45.0, 8.0, 30, 70), tn(100.0, 20.0, 30, 127)),
            Family::Strings => (tn(62.0, 10.0, 36, 96), tn(80.0, 18.0, 25, 127)),
            Family::Brass => (tn(58.0, 8.0, 40, 84), tn(90.0, 18.0, 30, 127)),
            Family::SynthLead => (tn(70.0, 8.0, 52, 96), tn(95.0, 15.0, 40, 127)),
            Family::SynthPad => (tn(60.0, 8.0, 36, 84), tn(75.0, 15.0, 25, 127)),
            Family::Keyboard => (tn(62.0, 12.0, 28, 100), tn(85.0, 20.0, 20, 127)),
            Family::Guitar => (tn(55.0, 9.0, 40, 84), tn(88.0, 18.0, 25, 127)),
            Family::Flute => (tn(76.0, 7.0, 60, 96), tn(80.0, 15.0, 25, 127)),
            Family::Reed => (tn(62.0, 8.0, 46, 86), tn(85.0, 15.0, 25, 127)),
            Family::Mallet => (tn(74.0, 9.0, 55, 100), tn(90.0, 18.0, 25, 127)),
            Family::Organ => (tn(60.0, 10.0, 36, 90), tn(100.0, 10.0, 60, 127)),
        };
        Self {
            family,
            pitch,
            velocity,
        }
    }

    pub fn distribution(&self) -> Result<FamilyNoteDistribution> {
        self.pitch.validate()?;
        self.velocity.validate()?;
        if self.velocity.lo == 0 {
            return Err(Error::invalid("velocity range must start at 1 or above"));
        }
        FamilyNoteDistribution::from_histograms(self.family, self.pitch.histogram(), self.velocity.histogram())
    }
}

fn normalize(h: &mut [f64]) {
    let total: f64 = h.iter().sum();
    for x in h.iter_mut() {
        *x /= total;
    }
}

/// Parametric family marginals: discretized truncated normals.
pub fn family_distribution(family: Family) -> FamilyNoteDistribution {
    FamilyNoteParams::default_for(family)
        .distribution()
        .expect("built-in note parameters are valid")
}

/// Smallest value whose cumulative mass reaches one half.
fn hist_median(h: &[f64]) -> usize {
    let mut cum = 0.0;
    for (v, &p) in h.iter().enumerate() {
        cum += p;
        if p > 0.0 && cum >= 0.5 - 1e-12 {
            return v;
        }
    }
    h.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn hist_sample(h: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last = 0;
    for (v, &p) in h.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last = v;
        if u < cum {
            return v;
        }
    }
    last
}

impl FamilyNoteDistribution {
    /// Builds a distribution from arbitrary histograms, renormalizing them.
    pub fn from_histograms(family: Family, pitch: Vec<f64>, velocity: Vec<f64>) -> Result<Self> {
        let check = |h: &[f64], what: &str| -> Result<()> {
            if h.len() != 128 {
                return Err(Error::invalid(format!("{what} histogram must have 128 bins")));
            }
            if h.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || h.iter().sum::<f64>() <= 0.0 {
                return Err(Error::invalid(format!("{what} histogram needs non-empty support")));
            }
            Ok(())
        };
        check(&pitch, "pitch")?;
        check(&velocity, "velocity")?;
        if velocity[0] != 0.0 {
            return Err(Error::invalid("velocity 0 must have zero mass"));
        }
        let (mut pitch_hist, mut velocity_hist) = (pitch, velocity);
        normalize(&mut pitch_hist);
        normalize(&mut velocity_hist);
        Ok(Self {
            family,
            pitch_hist,
            velocity_hist,
        })
    }

    pub fn sample_pitch(&self, rng: &mut Rng) -> u8 {
        hist_sample(&self.pitch_hist, rng) as u8
    }

    pub fn sample_velocity(&self, rng: &mut Rng) -> u8 {
        hist_sample(&self.velocity_hist, rng).max(1) as u8
    }

    pub fn mean_pitch(&self) -> f64 {
        self.pitch_hist
            .iter()
            .enumerate()
            .map(|(v, p)| v as f64 * p)
            .sum()
    }

    pub fn median_pitch(&self) -> u8 {
        hist_median(&self.pitch_hist) as u8
    }

    pub fn median_velocity(&self) -> u8 {
        hist_median(&self.velocity_hist).max(1) as u8
    }
}

/// Median pitch and velocity at onset 0 with the default gate length.
pub fn median_note(dist: &FamilyNoteDistribution) -> NoteEvent {
    median_note_with_duration(dist, DEFAULT_NOTE_DURATION)
}

pub fn median_note_with_duration(dist: &FamilyNoteDistribution, duration: f64) -> NoteEvent {
    NoteEvent::new(dist.median_pitch(), dist.median_velocity(), 0.0, duration)
}

/// One distribution per family, indexed by family.
#[derive(Debug, Clone)]
pub struct FamilyDistributions {
    by_family: Vec<FamilyNoteDistribution>,
}

impl FamilyDistributions {
    pub fn parametric() -> Self {
        Self {
            by_family: Family::ALL.iter().map(|&f| family_distribution(f)).collect(),
        }
    }

    /// Built-in parameters, replaced family by family with `params`.
    pub fn from_params(params: &[FamilyNoteParams]) -> Result<Self> {
        let mut out = Self::parametric();
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.family == p.family) {
                return Err(Error::invalid(format!("note parameters for {} given twice", p.family)));
            }
            out.by_family[p.family.index()] = p.distribution()?;
        }
        Ok(out)
    }

    pub fn get(&self, family: Family) -> &FamilyNoteDistribution {
        &self.by_family[family.index()]
    }
}

impl Default for FamilyDistributions {
    fn default() -> Self {
        Self::parametric()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn histograms_are_normalized() {
        for f in Family::ALL {
            let d = family_distribution(f);
            assert!((d.pitch_hist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!((d.velocity_hist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(d.velocity_hist[0], 0.0);
        }
    }

    #[test]
    fn bass_sits_below_lead() {
        let bass = family_distribution(Family::Bass);
        let lead = family_distribution(Family::SynthLead);
        assert!(bass.median_pitch() < lead.median_pitch());
        assert!(bass.mean_pitch() < lead.mean_pitch());
    }

    #[test]
    fn symmetric_histogram_median() {
        let mut p = vec![0.0; 128];
        for (v, w) in [(50, 1.0), (51, 2.0), (52, 3.0), (53, 2.0), (54, 1.0)] {
            p[v] = w;
        }
        let mut vel = vec![0.0; 128];
        vel[100] = 1.0;
        let d = FamilyNoteDistribution::from_histograms(Family::Bass, p, vel).unwrap();
        let n = median_note(&d);
        assert_eq!((n.pitch, n.velocity), (52, 100));
        assert_eq!(n.onset, 0.0);
        assert_eq!(n.duration, DEFAULT_NOTE_DURATION);
    }

    #[test]
    fn point_mass_median() {
        let mut p = vec![0.0; 128];
        p[40] = 1.0;
        let mut v = vec![0.0; 128];
        v[100] = 1.0;
        let d = FamilyNoteDistribution::from_histograms(Family::Bass, p, v).unwrap();
        let n = median_note(&d);
        assert_eq!((n.pitch, n.velocity), (40, 100));
    }

    #[test]
    fn median_satisfies_cdf_bracket() {
        for f in Family::ALL {
            let d = family_distribution(f);
            let m = d.median_pitch() as usize;
            let below: f64 = d.pitch_hist[..m].iter().sum();
            let through: f64 = d.pitch_hist[..=m].iter().sum();
            assert!(below < 0.5 && 0.5 <= through, "{f}: {below} {through}");
        }
    }

    #[test]
    fn monte_carlo_mean_matches_histogram() {
        let d = family_distribution(Family::Keyboard);
        let mean = d.mean_pitch();
        let var: f64 = d
            .pitch_hist
            .iter()
            .enumerate()
            .map(|(v, p)| p * (v as f64 - mean).powi(2))
            .sum();
        let n = 100_000;
        let mut rng = seeded(11);
        let emp = (0..n).map(|_| d.sample_pitch(&mut rng) as f64).sum::<f64>() / n as f64;
        assert!((emp - mean).abs() < 3.0 * var.sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn rejects_degenerate_histograms() {
        assert!(FamilyNoteDistribution::from_histograms(Family::Bass, vec![0.0; 128], vec![1.0; 128]).is_err());
        assert!(FamilyNoteDistribution::from_histograms(Family::Bass, vec![1.0; 10], vec![0.0; 128]).is_err());
        let mut v = vec![1.0; 128];
        assert!(FamilyNoteDistribution::from_histograms(Family::Bass, vec![1.0; 128], v.clone()).is_err());
        v[0] = 0.0;
        assert!(FamilyNoteDistribution::from_histograms(Family::Bass, vec![1.0; 128], v).is_ok());
    }
}
