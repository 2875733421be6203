use proptest::prelude::*;
use timbre_core::synthbank::{generate_bank, render_note, strip_effects, Family, NoteEvent};

const SR: u32 = 16_000;

fn family() -> impl Strategy<Value = Family> {
    (0..Family::ALL.len()).prop_map(|i| Family::ALL[i])
}

/// Period from the normalized autocorrelation: the shortest lag whose
/// correlation is a local maximum within 10% of the best one, refined by a
/// parabola through its neighbours.
fn detect_f0(x: &[f64], sr: f64, expected: f64) -> f64 {
    let lo = (sr / (expected * 2.0)).floor() as usize;
    let hi = (sr / (expected / 2.0)).ceil() as usize;
    let n = x.len() - hi - 1;
    let ac = |lag: usize| -> f64 {
        let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
        for i in 0..n {
            xy += x[i] * x[i + lag];
            xx += x[i] * x[i];
            yy += x[i + lag] * x[i + lag];
        }
        xy / (xx * yy).sqrt()
    };
    let r: Vec<f64> = (lo - 1..=hi + 1).map(ac).collect();
    let best = r.iter().cloned().fold(f64::MIN, f64::max);
    let idx = (1..r.len() - 1)
        .find(|&i| r[i] >= 0.9 * best && r[i] >= r[i - 1] && r[i] >= r[i + 1])
        .unwrap();
    let (a, b, c) = (r[idx - 1], r[idx], r[idx + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
    let lag = (lo - 1 + idx) as f64 + shift;
    sr / lag
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rendering_is_deterministic(fam in family(), seed in any::<u64>(), pitch in 30u8..90, vel in 1u8..=127) {
        let patch = &generate_bank(1, &[fam], seed).unwrap()[0];
        let note = NoteEvent::new(pitch, vel, 0.05, 0.4);
        let a = render_note(patch, &note, SR, 1.5).unwrap();
        let b = render_note(patch, &note, SR, 1.5).unwrap();
        prop_assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn rendered_buffers_never_clip(fam in family(), seed in any::<u64>(), pitch in 20u8..100, vel in 1u8..=127) {
        let patch = &generate_bank(1, &[fam], seed).unwrap()[0];
        let note = NoteEvent::new(pitch, vel, 0.0, 0.5);
        let audio = render_note(patch, &note, SR, 1.5).unwrap();
        prop_assert!(audio.is_finite());
        prop_assert!(audio.peak() <= 1.0, "peak {}", audio.peak());
    }

    #[test]
    fn peak_is_non_decreasing_in_velocity(fam in family(), seed in any::<u64>(), pitch in 30u8..90, v1 in 1u8..=127, v2 in 1u8..=127) {
        let patch = &generate_bank(1, &[fam], seed).unwrap()[0];
        let (lo, hi) = (v1.min(v2), v1.max(v2));
        let peak = |v| render_note(patch, &NoteEvent::new(pitch, v, 0.0, 0.4), SR, 1.5).unwrap().peak();
        let (a, b) = (peak(lo), peak(hi));
        prop_assert!(a <= b + 1e-12, "velocity {lo} peak {a} > velocity {hi} peak {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn pitched_dry_patches_sound_at_the_note_frequency(fam in family(), seed in any::<u64>(), pitch in 40u8..80) {
        let patch = strip_effects(&generate_bank(1, &[fam], seed).unwrap()[0], 1);
        prop_assume!(!patch.has_noise());
        let note = NoteEvent::new(pitch, 100, 0.0, 0.6);
        let audio = render_note(&patch, &note, SR, 0.6 + patch.envelope.release + 0.1).unwrap();
        // Skip the attack, and any pitch sweep, then look for a loud stretch.
        let win = (0.12 * SR as f64) as usize;
        let start = (0.1 * SR as f64) as usize;
        let seg = &audio.samples[start..start + win];
        let rms = (seg.iter().map(|v| v * v).sum::<f64>() / win as f64).sqrt();
        prop_assume!(rms > 1e-3);
        let want = note.frequency();
        let got = detect_f0(seg, SR as f64, want);
        prop_assert!((got - want).abs() <= 0.01 * want, "{fam}: detected {got:.2} Hz, expected {want:.2} Hz");
    }
}
