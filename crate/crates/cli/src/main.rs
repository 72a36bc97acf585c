mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

/// Glycan property prediction on combinatorial complexes.
#[derive(Debug, Parser)]
#[command(name = "glycocc", version)]
struct Cli {
    /// Root that every relative path is resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse an IUPAC-condensed glycan and print its tree as JSON.
    Parse { iupac: String },
    /// Build the all-atom graph; prints SMILES and atom/bond/monomer counts.
    Assemble { iupac: String },
    /// Build the combinatorial complex; prints `rank<TAB>index<TAB>atoms` lines.
    BuildCc { iupac: String },
    /// Train on the configured dataset; writes the split, checkpoint and epoch log.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score the trained model; writes the metric report with full and OOD rows.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write final-layer cell embeddings of every glycan as TSV.
    Embed {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to `embeddings.tsv` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Combine metric reports into per-model accumulated normalized performance.
    AnpReport {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "val")]
        partition: String,
        /// `full` or `ood`.
        #[arg(long, default_value = "full")]
        subset: String,
        #[arg(long, default_value = "anp.tsv")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let wd = cli.workdir;
    match cli.command {
        Command::Parse { iupac } => commands::parse(&iupac),
        Command::Assemble { iupac } => commands::assemble(&iupac),
        Command::BuildCc { iupac } => commands::build_cc(&iupac),
        Command::Train { config } => commands::train(&wd, &config),
        Command::Eval { config } => commands::eval(&wd, &config),
        Command::Embed { config, out } => commands::embed(&wd, &config, out.as_deref()),
        Command::AnpReport {
            reports,
            partition,
            subset,
            out,
        } => commands::anp_report(&wd, &reports, &partition, &subset, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
