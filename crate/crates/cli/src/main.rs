use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use forecastad_cli::ablate::Sweep;
use forecastad_cli::config::SEED_ENV;
use forecastad_cli::{render_plan, resolve, run, CliError, Command, ConfigSources, Profile};

/// Forecasting-based anomaly detection on irregular thermal-image sequences.
///
/// Any config field can be overridden with a dotted flag, for example
/// `--train.lr 0.001` or `--eval.seeds [0,1]`.
#[derive(Debug, Parser)]
#[command(name = "forecastad", version)]
struct Cli {
    /// JSON config file; defaults to the config left in the output directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in defaults: desk, paper or tiny.
    #[arg(long, global = true)]
    profile: Option<String>,

    /// Output directory for every artifact.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for per-day and per-seed work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Print the plan (inputs, producers, outputs) without running anything.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Config override `key=value`; same as `--key value`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate synthetic operational days.
    Simulate,
    /// Segment, filter and label the simulated days with the rule engine.
    Label,
    /// Assign days to training, validation and test sets.
    Split,
    /// Pre-train the image autoencoder, one model per seed.
    Pretrain,
    /// Train the forecaster from the pre-trained weights.
    Train,
    /// Write score files and anomaly-map panels.
    Score,
    /// Score every detector and write the evaluation report.
    Evaluate,
    /// Train and evaluate the variants of one sweep.
    Ablate {
        /// time, k or arch.
        #[arg(long, default_value = "time")]
        sweep: String,
    },
    /// Emit figure files.
    Plot,
    /// Drop deployment normals whose context embedding is far from training.
    CleanDeployment,
}

/// Pulls `--a.b value` and `--a.b=value` pairs out of the argument list.
fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--").filter(|f| f.split('=').next().is_some_and(|k| k.contains('.'))) else {
            rest.push(arg);
            continue;
        };
        match flag.split_once('=') {
            Some((k, v)) => overrides.push((k.to_owned(), v.to_owned())),
            None => {
                let value = it.next().ok_or_else(|| CliError::config(format!("--{flag} needs a value")))?;
                overrides.push((flag.to_owned(), value));
            }
        }
    }
    Ok((rest, overrides))
}

fn main_inner() -> Result<(), CliError> {
    let (args, mut overrides) = extract_overrides(std::env::args().collect())?;
    let cli = Cli::parse_from(args);
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        overrides.push((k.to_owned(), v.to_owned()));
    }
    if cli.jobs == 0 {
        return Err(CliError::config("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(|e| CliError::Other(e.to_string()))?;

    let sources = ConfigSources {
        profile: cli.profile.as_deref().map(str::parse::<Profile>).transpose()?,
        config_file: cli.config,
        out_dir: cli.out,
        overrides,
        seed_env: std::env::var(SEED_ENV).ok(),
    };
    let cfg = resolve(&sources)?;
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Label => Command::Label,
        Cmd::Split => Command::Split,
        Cmd::Pretrain => Command::Pretrain,
        Cmd::Train => Command::Train,
        Cmd::Score => Command::Score,
        Cmd::Evaluate => Command::Evaluate,
        Cmd::Ablate { sweep } => Command::Ablate(sweep.parse::<Sweep>()?),
        Cmd::Plot => Command::Plot,
        Cmd::CleanDeployment => Command::CleanDeployment,
    };
    if cli.dry_run {
        print!("{}", render_plan(command, &cfg));
        return Ok(());
    }
    log::info!("{} under profile {} (config {})", command.name(), cfg.profile, cfg.hash());
    run(command, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
