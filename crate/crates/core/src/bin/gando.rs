use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gando::advtrain::TrainMode;
use gando::degrade::Family;
use gando::error::{Error, Result};
use gando::orchestrator::{cmd_distort, cmd_evaluate, cmd_generate_data, cmd_report, cmd_train, Context, ExperimentConfig};
use gando::tinyssd::Layer;

/// Robust detection experiments on synthetic scenes.
#[derive(Parser)]
#[command(name = "gando", version)]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set lambda=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output root. Takes precedence over GANDO_OUTPUT_ROOT and the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the dataset manifest (and the image cache when enabled).
    GenerateData,
    /// Train one detector.
    Train {
        #[arg(long, value_parser = parse_mode)]
        mode: TrainMode,
        /// Train only layers up to and including this one (block1..block4).
        #[arg(long, value_parser = parse_layer)]
        freeze_after: Option<Layer>,
    },
    /// Run evaluation suites and write reports.
    Evaluate {
        /// Suites to run (comma separated or repeated). Defaults to the config list.
        #[arg(long = "suite", value_delimiter = ',')]
        suites: Vec<String>,
    },
    /// Apply one distortion level to a PNG file or a directory of PNGs.
    Distort {
        input: PathBuf,
        #[arg(long, value_parser = parse_family)]
        family: Family,
        /// 1-based index into the family's pool.
        #[arg(long)]
        level: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect rendered reports into a summary.
    Report,
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    TrainMode::parse(s).map_err(|e| e.to_string())
}

fn parse_layer(s: &str) -> Result<Layer, String> {
    Layer::parse(s).map_err(|e| e.to_string())
}

fn parse_family(s: &str) -> Result<Family, String> {
    Family::parse(s).ok_or_else(|| format!("unknown family '{s}' (gaussian, defocus, camshake, awgn)"))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let ctx = Context::new(cfg, cli.output.as_deref());
    match cli.command {
        Command::GenerateData => ctx.record("generate-data", cmd_generate_data),
        Command::Train { mode, freeze_after } => {
            let label = match freeze_after {
                Some(k) => format!("train --mode {mode} --freeze-after {}", k.name()),
                None => format!("train --mode {mode}"),
            };
            ctx.record(&label, |c| cmd_train(c, mode, freeze_after))
        }
        Command::Evaluate { suites } => {
            let suites = if suites.is_empty() { ctx.cfg.suites.clone() } else { suites };
            ctx.record(&format!("evaluate --suite {}", suites.join(",")), |c| cmd_evaluate(c, &suites))
        }
        Command::Distort {
            input,
            family,
            level,
            seed,
            out,
        } => ctx.record("distort", |c| cmd_distort(c, &input, family, level, seed, &out)),
        Command::Report => ctx.record("report", cmd_report),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(artifacts) => {
            for a in artifacts {
                println!("{}", a.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Level { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
