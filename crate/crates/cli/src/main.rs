//! `phaseret`: phase-retrieval experiments from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "phaseret", version, about = "Fourier phase retrieval workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Swap measured phase or magnitude for random ones and compare the results.
    DemoSwap(Opts),
    /// Run a classical solver over test images and score it.
    Solve(Opts),
    /// Train a network (mlp, cpr or cpr-fs) and write checkpoints.
    Train(Opts),
    /// Score a saved checkpoint on test images.
    Eval(Opts),
    /// Run several methods on one dataset and tabulate them.
    Bench(Opts),
    /// Train cpr-fs cascades with 1..=max-q stages and compare test error.
    Ablate(Opts),
}

/// Every flag overrides the built-in default and the `--config` file.
#[derive(Args, Debug, Default)]
struct Opts {
    /// `key = value` settings file, or a previous `run.json`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mnist, emnist, fashion or kmnist.
    #[arg(long)]
    dataset: Option<String>,
    /// Dataset root holding `<dataset>/<idx file>[.gz]` (default: $PHASERET_DATA_ROOT or ./data).
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of images after a seeded shuffle (0 = all).
    #[arg(long)]
    subset: Option<usize>,
    /// Test images for bench and ablate (0 = all).
    #[arg(long)]
    test_subset: Option<usize>,
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long)]
    threads: Option<usize>,
    /// hio, raar, er, mlp, cpr or cpr-fs.
    #[arg(long)]
    method: Option<String>,
    /// Comma-separated methods for bench.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    /// Independent solver runs; the best magnitude fit is kept.
    #[arg(long)]
    restarts: Option<usize>,
    /// Measure at side m with a known support instead of at the image side.
    #[arg(long)]
    oversample: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Per-stage losses, e.g. `mse,mse,mse,mse,mae`.
    #[arg(long)]
    losses: Option<String>,
    /// Stage count for cpr-fs.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    max_q: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    normalization: Option<f64>,
    /// Checkpoint directory to evaluate.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    grid_count: Option<usize>,
}

impl Opts {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        fn put<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut out = Vec::new();
        put(&mut out, "dataset", &self.dataset);
        put(&mut out, "data-root", &path(&self.data_root));
        put(&mut out, "out", &path(&self.out));
        put(&mut out, "seed", &self.seed);
        put(&mut out, "subset", &self.subset);
        put(&mut out, "test-subset", &self.test_subset);
        put(&mut out, "threads", &self.threads);
        put(&mut out, "method", &self.method);
        put(&mut out, "methods", &self.methods);
        put(&mut out, "beta", &self.beta);
        put(&mut out, "iters", &self.iters);
        put(&mut out, "restarts", &self.restarts);
        put(&mut out, "oversample", &self.oversample);
        put(&mut out, "epochs", &self.epochs);
        put(&mut out, "batch-size", &self.batch_size);
        put(&mut out, "lr", &self.lr);
        put(&mut out, "val-fraction", &self.val_fraction);
        put(&mut out, "losses", &self.losses);
        put(&mut out, "q", &self.q);
        put(&mut out, "max-q", &self.max_q);
        put(&mut out, "dropout", &self.dropout);
        put(&mut out, "normalization", &self.normalization);
        put(&mut out, "checkpoint", &path(&self.checkpoint));
        put(&mut out, "checkpoint-every", &self.checkpoint_every);
        put(&mut out, "grid-count", &self.grid_count);
        out
    }

    fn resolve(&self, command: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::defaults(command);
        if let Some(file) = &self.config {
            cfg.apply_file(file)?;
        }
        for (key, value) in self.pairs() {
            cfg.set(key, &value).with_context(|| format!("--{key}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let (name, opts) = match &cli.command {
        Command::DemoSwap(o) => ("demo-swap", o),
        Command::Solve(o) => ("solve", o),
        Command::Train(o) => ("train", o),
        Command::Eval(o) => ("eval", o),
        Command::Bench(o) => ("bench", o),
        Command::Ablate(o) => ("ablate", o),
    };
    let cfg = opts.resolve(name)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    commands::write_json(&cfg.out.join("run.json"), &cfg)?;
    match name {
        "demo-swap" => commands::demo_swap(&cfg),
        "solve" => commands::solve(&cfg),
        "train" => commands::train(&cfg),
        "eval" => commands::eval(&cfg),
        "bench" => commands::bench(&cfg),
        _ => commands::ablate(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
