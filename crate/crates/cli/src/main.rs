use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use timbre_core::config::RunSpec;
use timbre_core::encoder::{BatchKind, TrainedModel};
use timbre_core::experiment::{bank_summary, training_order, Experiment, LoadedRun, Method, BANK_FILE, DESCRIPTORS};
use timbre_core::retrieval::{reports_to_csv, reports_to_markdown, EmbeddingDatabase, EvalMode, EvalReport};
use timbre_core::{AudioBuffer, Error, Family};

/// Synthetic instrument bank, contrastive timbre encoders and
/// query-by-example instrument retrieval.
#[derive(Parser)]
#[command(name = "timbre", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Single-source query table.
    Single,
    /// Mixture query table.
    Mixture,
    /// Descriptor rows of both tables, no checkpoints needed.
    Baselines,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the instrument bank and print per-family counts.
    GenBank {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render query sets and training previews to WAV with manifests.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train runs from the config; all of them unless --run is given.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        /// Directory holding one sub-directory per run.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long = "run")]
        only: Vec<String>,
    },
    /// Embed one median note per instrument with a run or `descriptors`.
    BuildDb {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank database instruments against a WAV file.
    Query {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        k: usize,
        /// Rank only this family's instruments.
        #[arg(long)]
        family: Option<Family>,
    },
    /// Write CSV and Markdown report tables.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::GenBank { config, out } => {
            let exp = Experiment::load(config)?;
            let file = exp.generate_bank()?;
            write(&out.join(BANK_FILE), file.to_json_bytes()?)?;
            for c in bank_summary(&file) {
                println!(
                    "{}: train {} valid {} test {} augmented {}",
                    c.family, c.train, c.valid, c.test, c.augmented
                );
            }
            println!("bank {} ({} instruments), config {}", out.join(BANK_FILE).display(), file.patches.len(), exp.hash);
        }
        Command::GenData { config, bank, out } => {
            let exp = Experiment::load(config)?;
            let (file, bank) = exp.load_bank(bank)?;
            let index = exp.write_dataset(&file, &bank, &out)?;
            for (name, n) in &index.manifests {
                println!("{name}: {n} records");
            }
            println!("{} audio files in {}, config {}", index.audio_files, out.display(), exp.hash);
        }
        Command::Train { config, bank, runs, only } => train(&Experiment::load(config)?, &bank, &runs, &only)?,
        Command::BuildDb {
            config,
            bank,
            runs,
            method,
            out,
        } => {
            let exp = Experiment::load(config)?;
            let (_, bank) = exp.load_bank(bank)?;
            let loaded = load_method(&exp, &runs, &method)?;
            let feats = exp.database_features(&bank)?;
            let db = exp.build_database(&feats, &method_of(loaded.as_ref()))?;
            db.save(&out)?;
            println!("database {} ({} entries, dim {}), config {}", out.display(), db.len(), db.dim(), exp.hash);
        }
        Command::Query {
            config,
            bank,
            runs,
            db,
            wav,
            k,
            family,
        } => {
            let exp = Experiment::load(config)?;
            let (_, bank) = exp.load_bank(bank)?;
            let db = EmbeddingDatabase::load(db)?;
            let loaded = load_method(&exp, &runs, &db.provenance.method.clone())?;
            let audio = AudioBuffer::load_wav(&wav)
                .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", wav.display())))?;
            let feats = exp.database_features(&bank)?;
            let result = exp.query_audio(&feats, &db, &method_of(loaded.as_ref()), &audio, k, family)?;
            for (rank, h) in result.hits.iter().enumerate() {
                println!("{}\t{}\t{}\t{:.6}", rank + 1, h.id, h.family, h.distance);
            }
        }
        Command::Evaluate {
            config,
            bank,
            runs,
            mode,
            out,
        } => evaluate(&Experiment::load(config)?, &bank, &runs, mode, &out)?,
    }
    Ok(())
}

fn load_method(exp: &Experiment, runs: &Path, name: &str) -> Result<Option<LoadedRun>, Error> {
    if name == DESCRIPTORS {
        Ok(None)
    } else {
        exp.load_run(runs, name).map(Some)
    }
}

fn method_of(run: Option<&LoadedRun>) -> Method<'_> {
    run.map_or(Method::Descriptors, LoadedRun::method)
}

fn train(exp: &Experiment, bank_path: &Path, runs: &Path, only: &[String]) -> Result<(), Error> {
    let (file, bank) = exp.load_bank(bank_path)?;
    for name in only {
        exp.config.run(name)?;
    }
    let selected: Vec<&RunSpec> = training_order(&exp.config)
        .into_iter()
        .filter(|r| only.is_empty() || only.contains(&r.name))
        .collect();
    if selected.is_empty() {
        return Err(Error::InvalidArgument("config has no runs".into()));
    }
    let mut trained: Vec<(String, TrainedModel)> = Vec::new();
    for kind in [BatchKind::SingleSource, BatchKind::Mixture] {
        let of_kind: Vec<&RunSpec> = selected.iter().copied().filter(|r| r.batch_kind == kind).collect();
        if of_kind.is_empty() {
            continue;
        }
        let data = exp.training_data(&file, &bank, kind)?;
        for run in of_kind {
            let teacher = match &run.teacher {
                None => None,
                Some(t) => match trained.iter().find(|(n, _)| n == t) {
                    Some((_, m)) => Some(m.clone()),
                    None => Some(exp.load_run(runs, t)?.model),
                },
            };
            log::info!("training run '{}' ({})", run.name, run.loss.as_str());
            let outcome = exp.train_run(&data, run, teacher.as_ref())?;
            let hash = exp.save_run(runs, run, &outcome)?;
            let last = outcome.loss_trace.last().copied().unwrap_or(f64::NAN);
            println!(
                "run {}: {} steps, final loss {last:.6}, checkpoint {hash}, config {}",
                run.name,
                outcome.loss_trace.len(),
                exp.hash
            );
            trained.push((run.name.clone(), outcome.model));
        }
    }
    Ok(())
}

fn write_table(exp: &Experiment, reports: &[EvalReport], out: &Path, stem: &str, title: &str) -> Result<(), Error> {
    write(&out.join(format!("{stem}.csv")), reports_to_csv(reports, &exp.hash)?)?;
    write(&out.join(format!("{stem}.md")), reports_to_markdown(reports, title, &exp.hash)?)?;
    for r in reports {
        let cells: Vec<String> = r.ks.iter().zip(&r.average).map(|(k, a)| format!("top{k} {:.1}%", 100.0 * a)).collect();
        println!("{stem} {}: {}", r.method, cells.join(", "));
    }
    Ok(())
}

fn evaluate(exp: &Experiment, bank_path: &Path, runs: &Path, mode: Mode, out: &Path) -> Result<(), Error> {
    let (file, bank) = exp.load_bank(bank_path)?;
    let feats = exp.database_features(&bank)?;
    let eval = &exp.config.eval;
    let load = |names: &[String]| -> Result<Vec<LoadedRun>, Error> { names.iter().map(|n| exp.load_run(runs, n)).collect() };
    match mode {
        Mode::Single => {
            let loaded = load(&eval.single.runs)?;
            let methods = exp.table_methods(EvalMode::SingleSource, &loaded)?;
            let queries = exp.single_queries(&file, &bank, eval.single.descriptors)?;
            let reports = exp.evaluate_single(&feats, &queries, &methods)?;
            write_table(exp, &reports, out, "single", "Single-source query by example")?;
        }
        Mode::Mixture => {
            let loaded = load(&eval.mixture.runs)?;
            let methods = exp.table_methods(EvalMode::Mixture, &loaded)?;
            let queries = exp.mixture_queries(&file, &bank, eval.mixture.descriptors)?;
            let reports = exp.evaluate_mixture(&feats, &queries, &methods)?;
            write_table(exp, &reports, out, "mixture", "Mixture query by example")?;
        }
        Mode::Baselines => {
            let queries = exp.single_queries(&file, &bank, true)?;
            let reports = exp.evaluate_single(&feats, &queries, &[Method::Descriptors])?;
            write_table(exp, &reports, out, "baselines_single", "Single-source baselines")?;
            if !exp.config.dataset.mixture_slots.is_empty() && eval.mixture.queries > 0 {
                let queries = exp.mixture_queries(&file, &bank, true)?;
                let reports = exp.evaluate_mixture(&feats, &queries, &[Method::Descriptors])?;
                write_table(exp, &reports, out, "baselines_mixture", "Mixture baselines")?;
            }
        }
    }
    println!("reports in {}, config {}", out.display(), exp.hash);
    Ok(())
}
