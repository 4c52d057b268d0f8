//! Batch experiment runner: each subcommand reproduces one family of
//! checkable claims and writes machine-readable records.
//!
//! Exit codes: 0 on success, 1 if any asserted claim failed, 2 on config
//! errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use coinsim::report::{
    any_failed, cmd_attack_table, cmd_lemma_suite, cmd_security_tables, write_records,
    ExperimentConfig, OutputFormat,
};

#[derive(Parser)]
#[command(name = "coinsim", version, about = "Public quantum coin simulator and verification suite")]
struct Cli {
    /// TOML config file; flags below override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    trials: Option<usize>,

    /// Output file (stdout when omitted)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Cap on dense state-vector entries
    #[arg(long, global = true)]
    dense_limit: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Success-probability sweep of the forged transaction
    AttackTable,
    /// Unforgeability and sabotage cells: demonstrated breaks, bound sweeps,
    /// and open cells
    SecurityTables,
    /// Structural-lemma residuals and spectral comparisons
    LemmaSuite,
}

fn load_config(cli: &Cli) -> coinsim::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::from_toml_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    if let Some(format) = cli.format {
        config.format = match format {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    if let Some(limit) = cli.dense_limit {
        config.dense_limit = limit;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let records = match &cli.command {
        Command::AttackTable => cmd_attack_table(&config),
        Command::SecurityTables => cmd_security_tables(&config),
        Command::LemmaSuite => cmd_lemma_suite(&config),
    };
    let records = match records {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = write_records(&records, config.format, config.out.as_deref()) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if any_failed(&records) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
