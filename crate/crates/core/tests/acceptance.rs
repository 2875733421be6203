//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! to stderr (uncaptured) and the test fails if any criterion fails.

mod common;

use std::io::Write as _;
use std::time::{Duration, Instant};

use common::*;
use rand::seq::SliceRandom;
use rand::Rng as _;
use timbre_core::config::ExperimentConfig;
use timbre_core::datasetgen::BatchSpec;
use timbre_core::dspfeatures::{FeatureParams, MelFrontend};
use timbre_core::encoder::{
    build_target_matrix, classification_pretext_loss, contrastive_objective, infonce_loss,
    multi_encoder_loss, multi_encoder_objective, triplet_loss, AnchorMode, Classifier, EncoderArch,
    EncoderParams, Evaluation, LossKind, MultiEncoderParams,
};
use timbre_core::experiment::{Experiment, LoadedRun, Method};
use timbre_core::retrieval::{
    chance_level, evaluate_single_source_embedded, query, EmbeddingDatabase, EvalReport,
    MedianNotePolicy, Provenance,
};
use timbre_core::rng::seeded;
use timbre_core::synthbank::generate_bank;
use timbre_core::{AudioBuffer, Family};

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn report(o: &Outcome) {
    let status = if o.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {}: {status} | {}", o.id, o.detail);
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

const MODES: [AnchorMode; 3] = [AnchorMode::SinglesAndPairs, AnchorMode::MixtureAnchored, AnchorMode::Full];

fn loss_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(0x1001);
    let mut worst: f64 = 0.0;
    let mut mismatched = Vec::new();
    let mut compared = 0;
    for b in 0..100 {
        let n = rng.gen_range(4..=24);
        let items = random_items(&mut rng, n);
        let t = oracle_targets(&items);
        let m = to_matrix(&t, &items);
        let is_mix: Vec<bool> = items.iter().map(|i| i.mixture).collect();
        let d = rng.gen_range(2..=16);
        let xs = random_vectors(&mut rng, n, d);

        let tau = rng.gen_range(0.05..1.0);
        match (naive_infonce(&xs, &t, tau), infonce_loss(&xs, &m, tau)) {
            (Some(want), Ok(got)) => {
                worst = worst.max((want - got.value).abs());
                compared += 1;
            }
            (None, Err(_)) => {}
            _ => mismatched.push(format!("batch {b} infonce")),
        }
        let margin = rng.gen_range(0.0..0.5);
        for mode in MODES {
            match (naive_triplet(&xs, &t, &is_mix, margin, mode), triplet_loss(&xs, &m, margin, mode)) {
                (Some(want), Ok(got)) => {
                    worst = worst.max((want - got.value).abs());
                    compared += 1;
                }
                (None, Err(_)) => {}
                _ => mismatched.push(format!("batch {b} triplet {mode:?}")),
            }
        }
        let k = rng.gen_range(1..=4);
        let outs = random_vectors(&mut rng, k, d);
        let targets = random_vectors(&mut rng, k, d);
        let got = multi_encoder_loss(&outs, &targets).unwrap().value;
        worst = worst.max((naive_multi(&outs, &targets) - got).abs());
        compared += 1;
    }
    let elapsed = start.elapsed();
    Outcome {
        id: "1 loss oracles",
        pass: worst <= 1e-9 && mismatched.is_empty() && elapsed < Duration::from_secs(30),
        detail: format!(
            "{compared} comparisons over 100 batches, max |diff| {worst:.2e} (tol 1e-9), {} definedness mismatches, {:.2}s (limit 30s)",
            mismatched.len(),
            secs(elapsed)
        ),
    }
}

/// Central differences on every coordinate, skipping coordinates whose
/// stencil changes the sign pattern of any hinge.
fn fd_max_rel_error(theta: &[f64], f: &dyn Fn(&[f64]) -> Evaluation) -> (f64, usize, usize) {
    let eps = 1e-6;
    let base = f(theta);
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0, 0);
    let mut th = theta.to_vec();
    for i in 0..theta.len() {
        th[i] = theta[i] + eps;
        let plus = f(&th);
        th[i] = theta[i] - eps;
        let minus = f(&th);
        th[i] = theta[i];
        let regime = |e: &Evaluation| e.hinge_args.iter().map(|h| *h > 0.0).collect::<Vec<_>>();
        if regime(&plus) != regime(&base) || regime(&minus) != regime(&base) {
            skipped += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * eps);
        let analytic = base.grad[i];
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / denom);
        checked += 1;
    }
    (worst, checked, skipped)
}

fn small_encoder(seed: u64) -> EncoderParams {
    let features = FeatureParams {
        n_mels: 5,
        ..FeatureParams::default()
    };
    let arch = EncoderArch::for_features(&features, 7, 4);
    EncoderParams::init(arch, features, None, seed).unwrap()
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded(0x2002);
    let enc = small_encoder(5);
    let mut results: Vec<(String, f64, usize, usize)> = Vec::new();

    let items = {
        let mut it = vec![mixture(&[1, 2, 3]), single(1), single(2), single(3)];
        it.extend([mixture(&[4, 5, 6]), single(4), single(5), single(6)]);
        it.extend([single(7), single(7), single(8), single(8)]);
        it
    };
    let m = to_matrix(&oracle_targets(&items), &items);
    let inputs = random_vectors(&mut rng, items.len(), enc.arch.input_dim);
    let mut cases: Vec<(String, LossKind, Option<AnchorMode>)> = vec![("infonce".into(), LossKind::Infonce, None)];
    for mode in MODES {
        let kind = if mode == AnchorMode::Full { LossKind::FullTriplet } else { LossKind::Triplet };
        cases.push((format!("triplet {mode:?}"), kind, Some(mode)));
    }
    for (name, loss, mode) in cases {
        let f = |th: &[f64]| contrastive_objective(&enc, th, &inputs, &m, loss, mode, 0.1, 0.2).unwrap();
        let (e, c, s) = fd_max_rel_error(&enc.theta, &f);
        results.push((name, e, c, s));
    }

    let clf = Classifier::init(small_encoder(6), 4, 7).unwrap();
    let pooled = random_vectors(&mut rng, 8, clf.encoder.arch.input_dim);
    let labels: Vec<usize> = (0..8).map(|i| i % 4).collect();
    let f = |th: &[f64]| {
        let (value, grad) = classification_pretext_loss(&clf, th, &pooled, &labels).unwrap();
        Evaluation {
            value,
            grad,
            hinge_args: Vec::new(),
        }
    };
    let (e, c, s) = fd_max_rel_error(&clf.flat(), &f);
    results.push(("classification".into(), e, c, s));

    let slots = vec![Family::Percussion, Family::Bass, Family::SynthLead];
    let mut multi = MultiEncoderParams::from_teacher(&small_encoder(8), slots).unwrap();
    for v in multi.theta.iter_mut() {
        *v += rng.gen_range(-0.2..0.2);
    }
    let mixtures = random_vectors(&mut rng, 5, multi.arch.input_dim);
    let targets: Vec<Vec<Vec<f64>>> = (0..5).map(|_| random_vectors(&mut rng, 3, multi.arch.embed_dim)).collect();
    let f = |th: &[f64]| multi_encoder_objective(&multi, th, &mixtures, &targets).unwrap();
    let (e, c, s) = fd_max_rel_error(&multi.theta, &f);
    results.push(("multi_encoder".into(), e, c, s));

    let elapsed = start.elapsed();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let all_checked = results.iter().all(|r| r.2 > 0);
    let detail = results
        .iter()
        .map(|(n, e, c, s)| format!("{n} {e:.1e} ({c} coords, {s} kinks)"))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome {
        id: "2 gradient checks",
        pass: worst < 1e-4 && all_checked && elapsed < Duration::from_secs(120),
        detail: format!("max rel error {worst:.2e} (tol 1e-4), {:.1}s (limit 120s): {detail}", secs(elapsed)),
    }
}

/// Every layout of up to three mixtures of up to four instruments, with
/// any subset of constituent singles, up to two foreign singles and both
/// item orders.
fn target_matrices() -> Outcome {
    let start = Instant::now();
    let mut shapes = 0usize;
    let mut failures = Vec::new();
    let mut mixture_pairs_seen = 0usize;
    for n_mix in 0..=3usize {
        for c in 1..=4usize {
            if n_mix == 0 && c > 1 {
                continue;
            }
            let slots = n_mix * c;
            for mask in 0..(1u32 << slots) {
                for foreign in 0..=2u32 {
                    for grouped in [true, false] {
                        let mut mixtures = Vec::new();
                        let mut singles = Vec::new();
                        let mut items = Vec::new();
                        for mi in 0..n_mix {
                            let ids: Vec<u32> = (0..c).map(|j| (mi * c + j) as u32).collect();
                            let mix = mixture(&ids);
                            let mine: Vec<Item> = ids
                                .iter()
                                .enumerate()
                                .filter(|(j, _)| mask & (1 << (mi * c + j)) != 0)
                                .map(|(_, &id)| single(id))
                                .collect();
                            if grouped {
                                items.push(mix);
                                items.extend(mine);
                            } else {
                                mixtures.push(mix);
                                singles.extend(mine);
                            }
                        }
                        items.extend(mixtures);
                        items.extend(singles);
                        for f in 0..foreign {
                            items.push(single(100 + f));
                        }
                        if n_mix == 0 {
                            items.extend([single(200), single(200)]);
                        }
                        let want = oracle_targets(&items);
                        let got = match build_target_matrix(&batch_spec(&items)) {
                            Ok(m) => m,
                            Err(e) => {
                                failures.push(format!("{n_mix}x{c} mask {mask}: {e}"));
                                continue;
                            }
                        };
                        shapes += 1;
                        let n = items.len();
                        let mut ok = got.len() == n;
                        for i in 0..n {
                            for j in 0..n {
                                ok &= got.get(i, j) == want[i][j];
                                if i != j && items[i].mixture && items[j].mixture {
                                    mixture_pairs_seen += 1;
                                }
                            }
                            ok &= got.is_mixture(i) == items[i].mixture;
                        }
                        if !ok {
                            failures.push(format!("{n_mix}x{c} mask {mask} foreign {foreign} grouped {grouped}"));
                        }
                    }
                }
            }
        }
    }
    // An instrument shared by two mixtures must be rejected.
    let shared = BatchSpec {
        items: batch_spec(&[mixture(&[1, 2]), mixture(&[2, 3])]).items,
    };
    let rejects_shared = build_target_matrix(&shared).is_err();
    let elapsed = start.elapsed();
    Outcome {
        id: "3 target matrices",
        pass: failures.is_empty() && rejects_shared && mixture_pairs_seen > 0 && elapsed < Duration::from_secs(10),
        detail: format!(
            "{shapes} batch layouts equal the rule-based enumerator, {} failures, {mixture_pairs_seen} mixture-mixture pairs checked, shared-instrument batch rejected: {rejects_shared}, {:.2}s (limit 10s)",
            failures.len(),
            secs(elapsed)
        ),
    }
}

fn provenance() -> Provenance {
    Provenance {
        method: "random".into(),
        checkpoint_hash: String::new(),
        config_hash: "test".into(),
        policy: MedianNotePolicy {
            note_duration: 0.75,
            note_length: 1.0,
        },
    }
}

fn random_unit(rng: &mut timbre_core::rng::Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return unit(&v);
        }
    }
}

fn retrieval_exactness() -> Outcome {
    let mut rng = seeded(0x4004);
    let fams = [Family::Bass, Family::Percussion, Family::SynthLead];
    let mut scan_failures = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=60);
        let d = rng.gen_range(2..=16);
        let mut ids: Vec<u32> = (0..(n as u32 * 3)).collect();
        ids.shuffle(&mut rng);
        let mut entries: Vec<(u32, Family, Vec<f64>)> = Vec::with_capacity(n);
        for &id in ids.iter().take(n) {
            let v = if !entries.is_empty() && rng.gen_bool(0.15) {
                entries[rng.gen_range(0..entries.len())].2.clone()
            } else {
                random_unit(&mut rng, d)
            };
            entries.push((id, fams[rng.gen_range(0..3)], v));
        }
        let db = EmbeddingDatabase::new(entries.clone(), provenance()).unwrap();
        let q: Vec<f64> = if rng.gen_bool(0.2) {
            entries[rng.gen_range(0..n)].2.clone()
        } else {
            (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()
        };
        let family = if rng.gen_bool(0.5) { Some(fams[rng.gen_range(0..3)]) } else { None };
        let k = rng.gen_range(1..=n + 3);
        let filtered: Vec<(u32, Vec<f64>)> = entries
            .iter()
            .filter(|e| family.map_or(true, |f| e.1 == f))
            .map(|e| (e.0, e.2.clone()))
            .collect();
        let got = query(&db, &q, k, family);
        if filtered.is_empty() {
            scan_failures += usize::from(got.is_ok());
            continue;
        }
        let want: Vec<(u32, f64)> = full_scan(&filtered, &q).into_iter().take(k).collect();
        let got = got.unwrap();
        let same = got.hits.len() == want.len()
            && got
                .hits
                .iter()
                .zip(&want)
                .all(|(h, w)| h.id == w.0 && (h.distance - w.1).abs() < 1e-12);
        scan_failures += usize::from(!same);
    }

    // Random encoder: query embeddings independent of the true instrument.
    let (n_db, n_q, d) = (50usize, 2000usize, 16usize);
    let entries: Vec<(u32, Family, Vec<f64>)> = (0..n_db as u32).map(|id| (id, Family::Bass, random_unit(&mut rng, d))).collect();
    let db = EmbeddingDatabase::new(entries, provenance()).unwrap();
    let queries: Vec<(Vec<f64>, u32)> = (0..n_q)
        .map(|_| (random_unit(&mut rng, d), rng.gen_range(0..n_db as u32)))
        .collect();
    let ks = [1, 5];
    let r = evaluate_single_source_embedded(&db, &queries, &ks, "random").unwrap();
    let mut chance_ok = true;
    let mut parts = Vec::new();
    for (j, &k) in ks.iter().enumerate() {
        let p = chance_level(&db, None, k).unwrap();
        let sigma = (p * (1.0 - p) / n_q as f64).sqrt();
        let dev = (r.average[j] - p).abs();
        chance_ok &= dev <= 3.0 * sigma && (p - k as f64 / n_db as f64).abs() < 1e-15;
        parts.push(format!("top{k} {:.4} vs {p:.4} (3 sigma {:.4})", r.average[j], 3.0 * sigma));
    }
    Outcome {
        id: "4 retrieval exactness",
        pass: scan_failures == 0 && chance_ok,
        detail: format!("1000 random databases, {scan_failures} differ from a full scan; random encoder over {n_q} queries: {}", parts.join(", ")),
    }
}

fn dsp_sanity() -> Outcome {
    let sr = 16_000;
    let params = FeatureParams::default();
    let fe = MelFrontend::new(params, sr).unwrap();

    // Independent filterbank centres: equally spaced on the HTK mel scale.
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (lo, hi) = (mel(params.fmin), mel(params.fmax));
    let centres: Vec<f64> = (1..=params.n_mels)
        .map(|i| inv(lo + (hi - lo) * i as f64 / (params.n_mels + 1) as f64))
        .collect();
    let expected = (0..params.n_mels)
        .min_by(|&a, &b| (centres[a] - 440.0).abs().total_cmp(&(centres[b] - 440.0).abs()))
        .unwrap();
    let sine: Vec<f64> = (0..sr as usize)
        .map(|i| 0.5 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin())
        .collect();
    let spec = fe.mel(&AudioBuffer::new(sine, sr)).unwrap();
    let mean: Vec<f64> = (0..spec.n_mels)
        .map(|m| (0..spec.frames).map(|t| spec.frame(t)[m]).sum::<f64>() / spec.frames as f64)
        .collect();
    let peak = (0..mean.len()).max_by(|&a, &b| mean[a].total_cmp(&mean[b])).unwrap();

    let patches = generate_bank(4, &[Family::Keyboard, Family::Bass], 11).unwrap();
    let mut worst: f64 = 0.0;
    for p in &patches {
        let note = timbre_core::NoteEvent::new(55, 100, 0.0, 0.5);
        let audio = timbre_core::synthbank::render_note(p, &note, sr, 1.0).unwrap();
        let base = fe.analyze(&audio, true).unwrap().descriptors.unwrap();
        for g in [0.1, 0.5, 3.0] {
            let scaled = fe.analyze(&audio.scaled(g), true).unwrap().descriptors.unwrap();
            // Relative beyond magnitude 1: kurtosis can reach the thousands.
            for (a, b) in base.as_slice().iter().zip(scaled.as_slice()) {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }

    let silent = fe.mel(&AudioBuffer::silent(sr as usize, sr)).unwrap();
    let floor_exact = silent.data.iter().all(|&v| v == params.log_floor);
    Outcome {
        id: "5 dsp sanity",
        pass: peak == expected && worst <= 1e-9 && floor_exact,
        detail: format!(
            "440 Hz peak in mel bin {peak} (expected {expected}), descriptor change under gain {worst:.2e} (tol 1e-9), silence at log floor: {floor_exact}"
        ),
    }
}

fn top(reports: &[EvalReport], method: &str, k: usize) -> f64 {
    reports
        .iter()
        .find(|r| r.method == method)
        .and_then(|r| r.top(k))
        .unwrap_or_else(|| panic!("no {method} top-{k}"))
}

fn train_runs(exp: &Experiment, data: &timbre_core::encoder::TrainingData, names: &[&str]) -> Vec<LoadedRun> {
    names
        .iter()
        .map(|name| {
            let run = exp.config.run(name).unwrap().clone();
            let outcome = exp.train_run(data, &run, None).unwrap();
            LoadedRun {
                run,
                model: outcome.model,
                checkpoint_hash: String::new(),
            }
        })
        .collect()
}

/// Criteria 6 and 7 share the toy banks.
fn toy_orderings() -> (Outcome, Outcome) {
    let start = Instant::now();
    let seeds = [1u64, 2, 3];
    let mut single_top1 = [[0.0; 4]; 3];
    let mut mixture_top5 = [[0.0; 3]; 3];
    let mut chance = 0.0;
    let single_names = ["classification", "triplet", "infonce"];
    let mixture_names = ["mix_triplet", "mix_full_triplet"];
    for (s, &seed) in seeds.iter().enumerate() {
        let exp = Experiment::new(ExperimentConfig::toy(seed)).unwrap();
        let file = exp.generate_bank().unwrap();
        let bank = exp.check_bank(&file).unwrap();
        let feats = exp.database_features(&bank).unwrap();

        let data = exp.training_data(&file, &bank, timbre_core::encoder::BatchKind::SingleSource).unwrap();
        let runs = train_runs(&exp, &data, &single_names);
        drop(data);
        let mut methods = vec![Method::Descriptors];
        methods.extend(runs.iter().map(LoadedRun::method));
        let queries = exp.single_queries(&file, &bank, true).unwrap();
        let reports = exp.evaluate_single(&feats, &queries, &methods).unwrap();
        single_top1[s] = [
            top(&reports, "descriptors", 1),
            top(&reports, "classification", 1),
            top(&reports, "triplet", 1),
            top(&reports, "infonce", 1),
        ];

        let data = exp.training_data(&file, &bank, timbre_core::encoder::BatchKind::Mixture).unwrap();
        let runs = train_runs(&exp, &data, &mixture_names);
        drop(data);
        let mut methods = vec![Method::Descriptors];
        methods.extend(runs.iter().map(LoadedRun::method));
        let queries = exp.mixture_queries(&file, &bank, true).unwrap();
        let reports = exp.evaluate_mixture(&feats, &queries, &methods).unwrap();
        mixture_top5[s] = [
            top(&reports, "descriptors", 5),
            top(&reports, "triplet", 5),
            top(&reports, "full_triplet", 5),
        ];
        let db = exp.build_database(&feats, &Method::Descriptors).unwrap();
        chance = Family::MIXTURE_SLOTS
            .iter()
            .map(|&f| chance_level(&db, Some(f), 5).unwrap())
            .sum::<f64>()
            / 3.0;
        let _ = writeln!(
            std::io::stderr(),
            "  seed {seed}: single top-1 {:?}, mixture top-5 {:?} ({:.0}s)",
            single_top1[s].map(|v| (v * 1000.0).round() / 10.0),
            mixture_top5[s].map(|v| (v * 1000.0).round() / 10.0),
            secs(start.elapsed())
        );
    }
    let elapsed = start.elapsed();
    let mean = |rows: &[[f64; 4]; 3], j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / 3.0;
    let mean3 = |rows: &[[f64; 3]; 3], j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / 3.0;
    let (desc5, trip5, full5) = (mean3(&mixture_top5, 0), mean3(&mixture_top5, 1), mean3(&mixture_top5, 2));
    let mix_pass = full5 >= trip5 && trip5 >= desc5 && full5 >= 4.0 * chance && elapsed < Duration::from_secs(1800);
    let mixture = Outcome {
        id: "6 toy mixture ordering",
        pass: mix_pass,
        detail: format!(
            "mean top-5 over seeds 1-3: full_triplet {:.1}% >= triplet {:.1}% >= descriptors {:.1}%, full_triplet >= 4 x chance {:.1}%; {:.0}s for criteria 6 and 7 (limit 1800s)",
            100.0 * full5,
            100.0 * trip5,
            100.0 * desc5,
            100.0 * 4.0 * chance,
            secs(elapsed)
        ),
    };
    let (d1, c1, t1, n1) = (mean(&single_top1, 0), mean(&single_top1, 1), mean(&single_top1, 2), mean(&single_top1, 3));
    let single = Outcome {
        id: "7 toy single-source ordering",
        pass: c1 > d1 && t1 > d1 && n1 > d1,
        detail: format!(
            "mean top-1 over seeds 1-3: classification {:.1}%, triplet {:.1}%, infonce {:.1}% vs descriptors {:.1}%",
            100.0 * c1,
            100.0 * t1,
            100.0 * n1,
            100.0 * d1
        ),
    };
    (mixture, single)
}

/// Bank, checkpoint and report bytes of a reduced pipeline.
fn pipeline_bytes(cfg: &ExperimentConfig) -> (Vec<u8>, Vec<Vec<u8>>, String, String) {
    let exp = Experiment::new(cfg.clone()).unwrap();
    let file = exp.generate_bank().unwrap();
    let bank = exp.check_bank(&file).unwrap();
    let feats = exp.database_features(&bank).unwrap();
    let mut checkpoints = Vec::new();
    let mut single = Vec::new();
    let mut mixture = Vec::new();
    for (kind, name) in [
        (timbre_core::encoder::BatchKind::SingleSource, "triplet"),
        (timbre_core::encoder::BatchKind::Mixture, "mix_full_triplet"),
    ] {
        let data = exp.training_data(&file, &bank, kind).unwrap();
        let mut runs = train_runs(&exp, &data, &[name]);
        let bytes = exp.checkpoint_bytes(&runs[0].run, &runs[0].model).unwrap();
        runs[0].checkpoint_hash = timbre_core::encoder::checkpoint_hash(&bytes);
        checkpoints.push(bytes);
        if kind == timbre_core::encoder::BatchKind::SingleSource {
            single = runs;
        } else {
            mixture = runs;
        }
    }
    let mut methods = vec![Method::Descriptors];
    methods.extend(single.iter().map(LoadedRun::method));
    let q = exp.single_queries(&file, &bank, true).unwrap();
    let single_csv = timbre_core::retrieval::reports_to_csv(&exp.evaluate_single(&feats, &q, &methods).unwrap(), &exp.hash).unwrap();
    let mut methods = vec![Method::Descriptors];
    methods.extend(mixture.iter().map(LoadedRun::method));
    let q = exp.mixture_queries(&file, &bank, true).unwrap();
    let mixture_csv = timbre_core::retrieval::reports_to_csv(&exp.evaluate_mixture(&feats, &q, &methods).unwrap(), &exp.hash).unwrap();
    (file.to_json_bytes().unwrap(), checkpoints, single_csv, mixture_csv)
}

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::toy(9);
    cfg.bank.instruments_per_family = 16;
    cfg.bank.augmentation = true;
    cfg.train.steps = 40;
    cfg.train.n_mixtures = 4;
    cfg.eval.single.queries = 40;
    cfg.eval.mixture.queries = 12;
    let a = pipeline_bytes(&cfg);
    let b = pipeline_bytes(&cfg);
    let bank = a.0 == b.0;
    let ckpt = a.1 == b.1;
    let reports = a.2 == b.2 && a.3 == b.3;
    Outcome {
        id: "8 determinism",
        pass: bank && ckpt && reports,
        detail: format!("two consecutive runs: bank identical {bank}, checkpoints identical {ckpt}, reports identical {reports}"),
    }
}

#[test]
fn acceptance_criteria() {
    let mut outcomes = vec![loss_oracles(), gradient_checks(), target_matrices(), retrieval_exactness(), dsp_sanity()];
    for o in &outcomes {
        report(o);
    }
    let (mixture, single) = toy_orderings();
    report(&mixture);
    report(&single);
    outcomes.push(mixture);
    outcomes.push(single);
    let det = determinism();
    report(&det);
    outcomes.push(det);
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
