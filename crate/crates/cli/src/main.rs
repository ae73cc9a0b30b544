//! `rtw`: build RTW reference banks, classify feature files, compare RTW and
//! self-attention patterns, and generate synthetic datasets.
//!
//! Every command prints one JSON document on stdout. Runs are reproducible:
//! all randomness comes from seeds in the run configuration or flags.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rtw_core::RunConfig;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "rtw", version, about = "Randomized Time Warping toolkit")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Preset applied before any other setting (paper-4.3 or paper-4.4).
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut text = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?,
            None => String::new(),
        };
        if let Some(p) = &self.preset {
            // The last preset line wins.
            text.push_str(&format!("\npreset = {p}\n"));
        }
        let mut cfg = RunConfig::parse(&text)?;
        for kv in &self.overrides {
            cfg.apply_override(kv)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a reference bank from DIR/<label>/*.rtwf.
    BuildBank(commands::BuildBankArgs),
    /// Classify feature files or labeled directories against a bank.
    Classify(commands::ClassifyArgs),
    /// Compare RTW attention patterns with self-attention head patterns.
    AttnCompare(commands::AttnCompareArgs),
    /// Write a synthetic warped dataset as DIR/{train,test}/<label>/*.rtwf.
    Synth(commands::SynthArgs),
}

/// Bad invocation; reported with exit code 2 like clap's own errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.config.resolve().and_then(|cfg| match cli.command {
        Command::BuildBank(a) => commands::build_bank(&cfg, a),
        Command::Classify(a) => commands::classify(&cfg, a),
        Command::AttnCompare(a) => commands::attn_compare(&cfg, a),
        Command::Synth(a) => commands::synth(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
