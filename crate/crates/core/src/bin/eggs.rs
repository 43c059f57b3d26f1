use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eggs::evaluation::ModelSpec;
use eggs::pipeline::{self, FeatureMode, PipelineConfig};
use eggs::Result;

#[derive(Parser)]
#[command(name = "eggs", version, about = "Relational spam classification experiments")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Flags override the corresponding config fields.
#[derive(Args)]
struct Overrides {
    /// TOML pipeline config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    feature_mode: Option<FeatureMode>,
    /// Stack count for every stacked model in the roster.
    #[arg(long, global = true)]
    stacks: Option<usize>,
    /// Comma-separated roster, e.g. `independent,sgl1,mrf,sgl1+mrf`.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<ModelSpec>>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset to <out>/data.
    Generate,
    /// Split the dataset and write per-subset feature matrices.
    Featurize,
    /// Fit base models, epsilons and rule weights.
    Train,
    /// Write per-subset test predictions for every roster model.
    Infer,
    /// Score predictions; writes report.txt and report.json.
    Eval,
    /// Every stage in order.
    RunAll,
    /// Print the effective config as TOML.
    Config,
}

fn resolve(o: Overrides) -> Result<PipelineConfig> {
    let mut cfg = match &o.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(t) = o.threads {
        cfg.threads = t;
    }
    if let Some(m) = o.feature_mode {
        cfg.feature_mode = m;
    }
    if o.stacks.is_some() {
        cfg.stacks = o.stacks;
    }
    if let Some(m) = o.models {
        cfg.experiment.roster = m;
    }
    if let Some(out) = o.out {
        cfg.paths.out = out;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(cli.overrides)?;
    match cli.command {
        Command::Generate => pipeline::cmd_generate(&cfg),
        Command::Featurize => pipeline::cmd_featurize(&cfg),
        Command::Train => pipeline::cmd_train(&cfg),
        Command::Infer => pipeline::cmd_infer(&cfg),
        Command::Eval => pipeline::cmd_eval(&cfg).map(|r| print!("{}", r.to_table())),
        Command::RunAll => pipeline::cmd_run_all(&cfg).map(|r| print!("{}", r.to_table())),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
