//! `kac`: command-line driver for N-particle collision-process
//! experiments. Subcommands dispatch to the library's experiment layer;
//! every run emits CSV series plus a JSON metadata sidecar and is
//! reproducible byte-for-byte for a fixed seed.

mod config;
mod runner;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "kac", version, about = "Kac collision process experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread count (0 = auto). Falls back to KAC_CHAOS_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trajectory and write binary snapshots.
    Simulate(CommonArgs),
    /// Chaos functional over a replica ensemble.
    Chaos(CommonArgs),
    /// Relaxation toward the uniform law on the energy sphere.
    Relaxation(CommonArgs),
    /// Law-of-large-numbers rate experiment.
    Lln(CommonArgs),
    /// Distance-comparison inequality report on random pairs.
    MetricsCheck(CommonArgs),
    /// Entropy functionals along the spectral trajectory.
    EntropyTrack(CommonArgs),
    /// Validate a configuration without running anything.
    Validate(CommonArgs),
}

fn main() {
    let cli = Cli::parse();
    let (args, kind) = match &cli.command {
        Command::Simulate(a) => (a, config::Kind::Simulate),
        Command::Chaos(a) => (a, config::Kind::Chaos),
        Command::Relaxation(a) => (a, config::Kind::Relaxation),
        Command::Lln(a) => (a, config::Kind::Lln),
        Command::MetricsCheck(a) => (a, config::Kind::MetricsCheck),
        Command::EntropyTrack(a) => (a, config::Kind::EntropyTrack),
        Command::Validate(a) => (a, config::Kind::Validate),
    };
    match run(args, kind) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}

fn run(args: &CommonArgs, kind: config::Kind) -> anyhow::Result<i32> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", args.config.display()))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| anyhow::anyhow!("parsing {}: {e}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.display().to_string();
    }
    let diagnostics = cfg.validate(kind);
    if matches!(kind, config::Kind::Validate) {
        if diagnostics.is_empty() {
            println!("ok");
            return Ok(0);
        }
        for d in &diagnostics {
            println!("{d}");
        }
        return Ok(1);
    }
    if !diagnostics.is_empty() {
        for d in &diagnostics {
            eprintln!("config error: {d}");
        }
        anyhow::bail!("invalid configuration ({} diagnostics)", diagnostics.len());
    }
    init_threads(args.threads)?;
    runner::run(&cfg, kind)?;
    Ok(0)
}

fn init_threads(flag: Option<usize>) -> anyhow::Result<()> {
    let requested = flag.or_else(|| {
        std::env::var("KAC_CHAOS_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(k) = requested {
        if k > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build_global()
                .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
        }
    }
    Ok(())
}
