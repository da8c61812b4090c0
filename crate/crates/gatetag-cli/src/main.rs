//! `gatetag` — drives the netlist pipeline from the shell.
//!
//! Inspection commands (`parse`, `chunk`, `expr`, `stats`, `gradcheck`,
//! `selftest`) print to stdout and write nothing. Artifact commands
//! (`augment`, `tag`, `pretrain`, `embed`, `finetune`, `eval`) write under
//! a single run directory (`--out`) together with a snapshot of the
//! resolved configuration and a checksum manifest; rerunning any of them
//! on unchanged inputs rewrites byte-identical files, for any worker count.
//!
//! Exit codes: 0 success, 1 failed self-test, 2 configuration error,
//! 3 input data error, 4 numeric failure (divergence or a gradient check
//! above tolerance). Usage errors exit 2 as well.

mod commands;
mod config;
mod rundir;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// A self-test check failed (exit 1).
    Check(String),
    /// Bad flag values or config file (exit 2).
    Config(String),
    /// Unreadable or malformed inputs (exit 3).
    Data(String),
    /// Divergence or a failed numeric check (exit 4).
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Check(m)
            | CliError::Config(m)
            | CliError::Data(m)
            | CliError::Numeric(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gatetag",
    version,
    about = "Netlists as text-attributed graphs: chunk, tag, pre-train, evaluate"
)]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Cell library file (default: the built-in demo library).
    #[arg(long, global = true, value_name = "FILE")]
    library: Option<PathBuf>,
    /// Run directory for artifact-writing commands.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Expression extraction depth.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 = library default. Outputs never depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validate netlists, printing a one-line summary of each.
    Parse {
        #[arg(required = true)]
        netlists: Vec<PathBuf>,
    },
    /// Slice netlists into register cones and print the cone manifest.
    Chunk {
        #[arg(required = true)]
        netlists: Vec<PathBuf>,
    },
    /// Print the symbolic expression of combinational gates.
    Expr {
        netlist: PathBuf,
        /// Single instance to extract (default: every combinational gate).
        #[arg(long)]
        gate: Option<String>,
    },
    /// Write function-preserving rewired variants of each netlist.
    Augment {
        #[arg(required = true)]
        netlists: Vec<PathBuf>,
        /// Variants per input circuit.
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Build the text-attributed-graph corpus from the netlists' cones.
    Tag {
        #[arg(required = true)]
        netlists: Vec<PathBuf>,
    },
    /// Print corpus statistics: graph count and per-graph averages.
    Stats { corpus: PathBuf },
    /// Run one pre-training step; writes checkpoints and loss curves.
    Pretrain {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        step: u8,
        /// Expression pairs to generate (step 1).
        #[arg(long, default_value_t = 2000)]
        pairs: usize,
        /// Variables per generated expression (step 1).
        #[arg(long, default_value_t = 6)]
        max_vars: usize,
        /// Netlists for the cone corpus (step 2).
        netlists: Vec<PathBuf>,
    },
    /// Write one embedding row per register cone of each netlist.
    Embed {
        #[arg(required = true)]
        netlists: Vec<PathBuf>,
    },
    /// Fine-tune a prediction head on one generated toy task.
    Finetune {
        #[arg(long, value_enum)]
        task: TaskName,
    },
    /// Fine-tune every toy task, including the text-ablated variant.
    Eval,
    /// Compare analytic gradients of every objective with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Run the built-in analytic-identity and round-trip checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskName {
    GateFn,
    RegRole,
    SizeArea,
    SizeDelay,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let rc = config::resolve(cli)?;
    let lib = config::load_library(&rc)?;
    gatetag::par::with_pool(rc.run.workers, || dispatch(cli, &rc, &lib))
}

fn dispatch(cli: &Cli, rc: &config::RunConfig, lib: &gatetag::netlist::CellLibrary) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Parse { netlists } => commands::parse(netlists, lib),
        Cmd::Chunk { netlists } => commands::chunk(netlists, lib),
        Cmd::Expr { netlist, gate } => commands::expr(netlist, gate.as_deref(), rc, lib),
        Cmd::Augment { netlists, count } => commands::augment(netlists, *count, rc, lib),
        Cmd::Tag { netlists } => commands::tag(netlists, rc, lib),
        Cmd::Stats { corpus } => commands::stats(corpus),
        Cmd::Pretrain { step, pairs, max_vars, netlists } => {
            commands::pretrain(*step, *pairs, *max_vars, netlists, rc, lib)
        }
        Cmd::Embed { netlists } => commands::embed(netlists, rc, lib),
        Cmd::Finetune { task } => commands::finetune(*task, rc, lib),
        Cmd::Eval => commands::eval(rc, lib),
        Cmd::Gradcheck { samples } => commands::gradcheck(*samples, rc),
        Cmd::Selftest => commands::selftest(lib),
    }
}
