//! `kgbias`: run a knowledge-graph gender-bias audit end to end or stage by
//! stage.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use kgbias::audit::{run_audit, run_stage, Manifest, RunStatus, Stage, MANIFEST};
use kgbias::config::AuditConfig;
use kgbias::model::ModelKind;
use kgbias::report::{write_json, write_text};
use kgbias::synth;
use kgbias::{Error, Result};

#[derive(Parser)]
#[command(name = "kgbias", version, about = "Gender-bias audit for knowledge graphs and their embeddings")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Audit configuration (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,

    /// Model kind to run (repeatable); overrides the config.
    #[arg(long = "model", value_parser = parse_model)]
    models: Vec<ModelKind>,

    /// Jaccard cutoff K (repeatable); overrides the config.
    #[arg(long = "k")]
    k: Vec<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the triple and label files.
    Ingest(RunArgs),
    /// Extract demography slices, merge them and split off held-out triples.
    Slice(RunArgs),
    /// Train one embedding table per model kind.
    Train(RunArgs),
    /// Link-prediction MRR and Hits@n on the held-out triples.
    Eval(RunArgs),
    /// Counting-based bias scores and thresholds per demography.
    DataBias(RunArgs),
    /// Gradient-perturbation bias scores per model, demography and direction.
    EmbedBias(RunArgs),
    /// Rank deviation, Jaccard@K, similarity matrices, entropy and counts.
    Compare(RunArgs),
    /// Collate the headline tables into summary.md.
    Report(RunArgs),
    /// Every stage in order.
    Audit(RunArgs),
    /// Write a synthetic corpus with its audit config.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CorpusKind {
    /// One demography, one male-only and one female-only occupation.
    Planted,
    /// Three demographies over 30 occupations.
    Bundled,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "bundled")]
    corpus: CorpusKind,

    /// Directory receiving triples.tsv, labels.tsv and audit.json.
    #[arg(long)]
    out: PathBuf,
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(args: &RunArgs) -> Result<AuditConfig> {
    let mut cfg = AuditConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if !args.models.is_empty() {
        cfg.models = args.models.clone();
    }
    if !args.k.is_empty() {
        cfg.k = args.k.clone();
    }
    Ok(cfg)
}

fn finish(manifest: &Manifest, cfg: &AuditConfig) {
    let status = match manifest.status {
        RunStatus::Complete => "complete",
        RunStatus::Failed => "failed",
    };
    println!(
        "{status}: {} artifacts, manifest {}",
        manifest.artifacts.len(),
        cfg.output_dir.join(MANIFEST).display()
    );
}

fn stage_of(command: &Command) -> Option<Stage> {
    Some(match command {
        Command::Ingest(_) => Stage::Ingest,
        Command::Slice(_) => Stage::Slice,
        Command::Train(_) => Stage::Train,
        Command::Eval(_) => Stage::Eval,
        Command::DataBias(_) => Stage::DataBias,
        Command::EmbedBias(_) => Stage::EmbedBias,
        Command::Compare(_) => Stage::Compare,
        Command::Report(_) => Stage::Report,
        Command::Audit(_) | Command::Synth(_) => return None,
    })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure {n} threads: {e}")))?;
    }
    match &cli.command {
        Command::Synth(args) => {
            let plans = match args.corpus {
                CorpusKind::Planted => synth::planted_plan(),
                CorpusKind::Bundled => synth::bundled_plan(),
            };
            let corpus = match args.corpus {
                CorpusKind::Planted => synth::planted_corpus(0),
                CorpusKind::Bundled => synth::bundled_corpus(),
            };
            write_text(&args.out.join("triples.tsv"), &corpus.triples_tsv())?;
            write_text(&args.out.join("labels.tsv"), &corpus.labels_tsv())?;
            write_json(&args.out.join("audit.json"), &synth::desk_config(&plans))?;
            println!("wrote {} triples to {}", corpus.triples.len(), args.out.display());
        }
        Command::Audit(args) => {
            let cfg = load_config(args)?;
            let result = run_audit(&cfg)?;
            finish(&result.manifest, &cfg);
        }
        Command::Ingest(args)
        | Command::Slice(args)
        | Command::Train(args)
        | Command::Eval(args)
        | Command::DataBias(args)
        | Command::EmbedBias(args)
        | Command::Compare(args)
        | Command::Report(args) => {
            let cfg = load_config(args)?;
            let stage = stage_of(&cli.command).expect("stage command");
            let manifest = run_stage(&cfg, stage)?;
            finish(&manifest, &cfg);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_class().code() as u8)
        }
    }
}
