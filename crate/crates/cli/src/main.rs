mod config;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use mmctr_core::data::{generate_tree_dataset, load_interactions, split_train_test, write_edges, write_interactions};
use mmctr_core::selftest::run_selftest;
use mmctr_core::serving::batch_topk;
use mmctr_core::{evaluate, load_checkpoint, save_checkpoint, SyntheticTreeSpec, Trainer};

use config::RunConfigFile;

/// Multi-manifold click-through-rate engine.
#[derive(Debug, Parser)]
#[command(name = "mmctr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic hierarchical interaction dataset.
    Generate(GenerateArgs),
    /// Train a model from a run config and save a checkpoint.
    Train(TrainArgs),
    /// Print AUC and log-loss of a checkpoint on labeled interactions.
    Eval(EvalArgs),
    /// Print the highest-probability ads per user as TSV.
    Topk(TopkArgs),
    /// Run the geometry and gradient invariant suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 3)]
    branching: usize,
    #[arg(long, default_value_t = 20)]
    users_per_leaf: usize,
    /// Probability of flipping a click label.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fraction of records written to test.csv.
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Training interactions; overrides `data` in the config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint path; overrides `checkpoint` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `model.seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args)]
struct TopkArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// User id; repeat for several users. Defaults to every user.
    #[arg(long)]
    user: Vec<String>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

/// A problem with how the command was invoked rather than with its inputs.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn set_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(usage("--threads must be >= 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the thread pool")
}

fn generate(args: GenerateArgs) -> Result<()> {
    if !(0.0..1.0).contains(&args.test_fraction) {
        return Err(usage("--test-fraction must lie in [0, 1)"));
    }
    let spec = SyntheticTreeSpec {
        depth: args.depth,
        branching: args.branching,
        users_per_leaf: args.users_per_leaf,
        click_noise: args.noise,
        seed: args.seed,
    };
    let ds = generate_tree_dataset(&spec)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let (train, test) = split_train_test(&ds.records, args.test_fraction, args.seed);
    write_interactions(args.out.join("interactions.csv"), &ds.records)?;
    write_edges(args.out.join("edges.csv"), &ds.edges)?;
    write_interactions(args.out.join("train.csv"), &train)?;
    write_interactions(args.out.join("test.csv"), &test)?;
    println!(
        "users={} ads={} edges={} records={} train={} test={}",
        ds.home_leaf.len(),
        spec.num_nodes(),
        ds.edges.len(),
        ds.records.len(),
        train.len(),
        test.len()
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    set_threads(args.threads)?;
    let mut run = RunConfigFile::load(&args.config)?;
    if let Some(seed) = args.seed {
        run.model.seed = seed;
    }
    let data = args
        .data
        .or(run.data.clone())
        .ok_or_else(|| usage("no training data: pass --data or set `data` in the config"))?;
    let out = args
        .out
        .or(run.checkpoint.clone())
        .ok_or_else(|| usage("no checkpoint path: pass --out or set `checkpoint` in the config"))?;
    let records = load_interactions(&data)?;
    let eval_records = run.eval_data.as_deref().map(load_interactions).transpose()?;

    let mut trainer = Trainer::new(run.train_config()).with_threads(args.threads);
    if let Some(eval) = &eval_records {
        trainer = trainer.with_eval(eval);
    }
    let stdout = io::stdout();
    let outcome = trainer.run(&records, |report| {
        let _ = writeln!(stdout.lock(), "{report}");
    })?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    save_checkpoint(&outcome.checkpoint, &out)?;
    eprintln!("saved checkpoint to {}", out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    set_threads(args.threads)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let records = load_interactions(&args.data)?;
    let metrics = evaluate(&ckpt, &records)?;
    if metrics.num_skipped > 0 {
        eprintln!("skipped {} records with unknown users or ads", metrics.num_skipped);
    }
    println!("{metrics}");
    Ok(())
}

fn topk(args: TopkArgs) -> Result<()> {
    set_threads(args.threads)?;
    if args.k == 0 {
        return Err(usage("--k must be >= 1"));
    }
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let users = if args.user.is_empty() {
        ckpt.vocab.users().to_vec()
    } else {
        args.user
    };
    let ranked = batch_topk(&ckpt, &users, args.k)?;
    let mut out = io::BufWriter::new(io::stdout().lock());
    for r in ranked {
        out.write_all(r.to_tsv().as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn selftest(args: SelftestArgs) -> Result<()> {
    let results = run_selftest(args.seed);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        anyhow::bail!("{failed} of {} properties failed", results.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Topk(a) => topk(a),
        Command::Selftest(a) => selftest(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
