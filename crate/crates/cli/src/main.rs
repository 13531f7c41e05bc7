//! `em0`: simulate Cortex-M0 images, collect event counters, and estimate
//! or train energy models from them.

mod commands;
mod support;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use em0_core::timing::HardwareConfig;

#[derive(Parser)]
#[command(name = "em0", version, about = "Cortex-M0 simulator, event counters and energy models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one image to its breakpoint and report registers, cycles and counters.
    Simulate(SimulateArgs),
    /// Counter rows (name, c1..c6, cycles) for one or more images.
    Profile(ProfileArgs),
    /// Energy of counter rows read from CSV.
    Estimate(EstimateArgs),
    /// Fit a model to measured energies with NNLS and cross-validate it.
    Train(TrainArgs),
    /// Control-flow graph of an image, with an optional static energy breakdown.
    Blocks(BlocksArgs),
    /// Built-in models.
    Models {
        #[command(subcommand)]
        command: ModelsCommand,
    },
}

#[derive(Subcommand)]
enum ModelsCommand {
    /// The published models, coefficients in nJ, as printed.
    List {
        #[arg(long, value_enum, default_value_t = ListFormat::Table)]
        output: ListFormat,
    },
    /// A model in the JSON file format.
    Show {
        /// Built-in key such as 24,ON,1, or a model file.
        model: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ListFormat {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    Elf,
    Raw,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnergyUnit {
    Nj,
    Uj,
    J,
}

#[derive(Args, Clone)]
pub struct ImageOptions {
    #[arg(long, value_enum, default_value_t = ImageFormat::Elf)]
    format: ImageFormat,
    /// Load address of a raw image.
    #[arg(long, value_parser = parse_address, default_value = "0x08000000")]
    base: u32,
    /// Start here instead of at the reset vector.
    #[arg(long, value_parser = parse_address)]
    entry: Option<u32>,
    /// Initial stack pointer; defaults to the vector table, or the top of
    /// RAM when the table holds none.
    #[arg(long, value_parser = parse_address)]
    sp: Option<u32>,
}

#[derive(Args)]
struct SimulateArgs {
    image: PathBuf,
    #[command(flatten)]
    image_opts: ImageOptions,
    /// Hardware configuration: frequency (MHz), prefetch, waitstates.
    #[arg(long, default_value = "20,OFF,0")]
    config: HardwareConfig,
    #[arg(long, default_value_t = 100_000_000)]
    max_instructions: u64,
    /// Built-in key or model file; adds the energy estimate.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    output: OutputFormat,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(required = true)]
    images: Vec<PathBuf>,
    #[command(flatten)]
    image_opts: ImageOptions,
    #[arg(long, default_value = "20,OFF,0")]
    config: HardwareConfig,
    #[arg(long, default_value_t = 100_000_000)]
    max_instructions: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    output: OutputFormat,
    /// Images simulated in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct EstimateArgs {
    /// Counters CSV with columns c1..c6 (name and cycles optional); `-` or
    /// omitted reads stdin.
    input: Option<PathBuf>,
    /// Built-in key such as 24,ON,1, or a model file.
    #[arg(long)]
    model: String,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    output: OutputFormat,
    #[arg(long, value_enum, default_value_t = EnergyUnit::Nj)]
    unit: EnergyUnit,
}

#[derive(Args)]
struct TrainArgs {
    /// Training CSV: name, c1..c6, energy_nj.
    input: PathBuf,
    /// Configuration the energies were measured under.
    #[arg(long)]
    config: HardwareConfig,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report uncentered R² instead of the mean-centered form.
    #[arg(long)]
    uncentered: bool,
    /// Also write the fitted model here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Folds fitted in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct BlocksArgs {
    image: PathBuf,
    #[command(flatten)]
    image_opts: ImageOptions,
    /// Extra function entry points reached only indirectly.
    #[arg(long = "root", value_parser = parse_address)]
    roots: Vec<u32>,
    /// Block execution counts (JSON), for the energy breakdown.
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Built-in key or model file; required with --counts.
    #[arg(long)]
    model: Option<String>,
    /// Simulate the image and write its block counts here.
    #[arg(long)]
    emit_counts: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000_000)]
    max_instructions: u64,
}

fn parse_address(s: &str) -> Result<u32, String> {
    em0_core::analysis::parse_address(s).ok_or_else(|| format!("invalid address {s:?}"))
}

/// Exit status: 0 success, 1 simulation fault, 2 usage or I/O error.
pub enum Outcome {
    Success,
    Fault,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Profile(a) => commands::profile(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Train(a) => commands::train(a),
        Command::Blocks(a) => commands::blocks(a),
        Command::Models { command: ModelsCommand::List { output } } => commands::models_list(output),
        Command::Models { command: ModelsCommand::Show { model } } => commands::models_show(&model),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Fault) => ExitCode::from(1),
        Err(e) => {
            eprintln!("em0: {e:#}");
            ExitCode::from(2)
        }
    }
}
