use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tropmorph_cli::config::{parse_seeds, ExperimentConfig, ExperimentKind};
use tropmorph_cli::error::{CliError, Result};
use tropmorph_cli::{experiments, report};

#[derive(Parser)]
#[command(
    name = "tropmorph",
    version,
    about = "Morphological and tropical network experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed list such as `0,1,2` or `0-9`; overrides the config.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment declared by the config's `kind`.
    Run(Common),
    /// Train dense networks.
    Train(Common),
    /// Pruning sweep over a saved dense checkpoint.
    Prune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Multiclass bagged DEP.
    Dep(Common),
    /// Monotone regression comparison.
    Monotone(Common),
    /// Test accuracy of a dense or DEP checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Summary tables from result directories.
    Report {
        /// Directories holding result CSVs.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Where to write table CSVs (default: the first directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, kind) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(kind)) => ExperimentConfig::parse(&format!("kind = \"{kind}\"\nseeds = [0]\n"))?,
        (None, None) => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(kind) = kind {
        cfg.kind = kind;
    }
    if let Some(s) = &common.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(cfg.kind.to_string()))
}

fn run_kind(common: &Common, kind: Option<ExperimentKind>) -> Result<()> {
    let cfg = load(common, kind)?;
    let out = out_dir(&cfg);
    let result = experiments::with_threads(common.threads, || experiments::run(&cfg, &out))??;
    for f in &result.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => run_kind(&c, None),
        Command::Train(c) => run_kind(&c, Some(ExperimentKind::DenseTrain)),
        Command::Dep(c) => run_kind(&c, Some(ExperimentKind::DepMulticlass)),
        Command::Monotone(c) => run_kind(&c, Some(ExperimentKind::Monotone)),
        Command::Prune { common, checkpoint } => {
            let checkpoint = checkpoint.ok_or_else(|| CliError::MissingData("--checkpoint is required".into()))?;
            let cfg = load(&common, Some(ExperimentKind::PruneSweep))?;
            let out = out_dir(&cfg);
            let rows = experiments::with_threads(common.threads, || {
                experiments::prune_checkpoint(&cfg, &checkpoint, &out)
            })??;
            for r in rows {
                println!("{:>5}%  {:.4}", r.p, r.accuracy);
            }
            Ok(())
        }
        Command::Eval { common, checkpoint } => {
            let cfg = load(&common, Some(ExperimentKind::DenseTrain))?;
            let acc = experiments::eval_checkpoint(&cfg, &checkpoint)?;
            println!("{acc:.6}");
            Ok(())
        }
        Command::Report { dirs, out } => {
            let out = out.unwrap_or_else(|| dirs[0].clone());
            report::report(&dirs, &out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
