//! `prvkit`: generate, validate, dump and analyze Paraver trace bundles.

mod analyze;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use prvkit_core::analysis::{Window, DEFAULT_BIN_NS};

#[derive(Debug, Parser)]
#[command(name = "prvkit", version, about = "Paraver trace toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic MPI-like workload trace.
    Demo(DemoArgs),
    /// Check a trace bundle; exits with 1 when it is invalid.
    Validate {
        /// Bundle base path (with or without `.prv`).
        base: PathBuf,
    },
    /// Print a bundle, or one of its files, in canonical form.
    Dump(DumpArgs),
    /// Run one analysis over a bundle.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct DemoArgs {
    /// Output base path; writes BASE.prv, BASE.pcf and BASE.row.
    #[arg(long, default_value = "demo")]
    out: PathBuf,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    tasks: u32,
    #[arg(long, default_value_t = 1008)]
    iterations: u32,
    #[arg(long, value_enum, default_value_t = TopologyArg::Ring)]
    topology: TopologyArg,
    /// Read the bundle back and write every analysis as CSV and SVG.
    #[arg(long)]
    full_report: bool,
    /// Bin width of the report, in ns.
    #[arg(long, default_value_t = DEFAULT_BIN_NS)]
    bin: u64,
    /// Attach a time sampler with this period (ns).
    #[arg(long, conflicts_with = "sample_counter_threshold")]
    sample_period: Option<u64>,
    /// Jitter fraction of the time sampler, in [0, 1).
    #[arg(long, requires = "sample_period")]
    sample_jitter: Option<f64>,
    /// Attach a counter sampler firing every N counted instructions.
    #[arg(long)]
    sample_counter_threshold: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TopologyArg {
    Ring,
    Torus2d,
}

#[derive(Debug, Args)]
struct DumpArgs {
    base: PathBuf,
    #[arg(long, group = "part")]
    pcf: bool,
    #[arg(long, group = "part")]
    row: bool,
    #[arg(long, group = "part")]
    records: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Parallelism,
    Timeline,
    Connectivity,
    Fractions,
    Bandwidth,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(value_enum)]
    kind: Kind,
    base: PathBuf,
    /// Bin width in ns.
    #[arg(long, default_value_t = DEFAULT_BIN_NS)]
    bin: u64,
    /// `t0:t1` in ns, or `workload` (the default when given without a value).
    #[arg(long, num_args = 0..=1, default_missing_value = "workload", value_parser = parse_window)]
    window: Option<WindowArg>,
    /// Routine event type; defaults to the configured routine type.
    #[arg(long)]
    event_type: Option<u32>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Parallelism only: count threads inside routine blocks as idle.
    #[arg(long)]
    derive_states_from_routine_events: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WindowArg {
    Workload,
    Range(Window),
}

fn parse_window(text: &str) -> Result<WindowArg, String> {
    match text {
        "workload" => Ok(WindowArg::Workload),
        _ => Window::parse(text).map(WindowArg::Range),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Command::Analyze(a) = &cli.command {
        if a.derive_states_from_routine_events && a.kind != Kind::Parallelism {
            Cli::command()
                .error(
                    ErrorKind::ArgumentConflict,
                    "--derive-states-from-routine-events applies to parallelism only",
                )
                .exit();
        }
    }
    let result = match cli.command {
        Command::Demo(args) => commands::demo(&args),
        Command::Validate { base } => commands::validate(&base),
        Command::Dump(args) => commands::dump(&args),
        Command::Analyze(args) => analyze::run(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
