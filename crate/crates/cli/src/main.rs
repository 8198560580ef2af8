//! `ufmc`: scenario-driven experiments on the UFMC link model.
//!
//! Exit codes: 0 success, 1 configuration or argument error, 2 a check
//! reported by `verify` failed.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ufmc::montecarlo::BerMode;
use ufmc::optimizer::{ProblemKind, Strategy};

#[derive(Debug, Parser)]
#[command(name = "ufmc", version, about = "UFMC interference analysis, optimization and simulation")]
struct Cli {
    /// Worker threads for trial and grid parallelism (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Built-in scenario name (see `ufmc show --list`).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Scenario JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the N = 2048 grid for presets instead of the N = 512 desk grid.
    #[arg(long, requires = "preset")]
    paper_grid: bool,
    /// Root seed; overrides the scenario's `seed`.
    #[arg(long, env = "UFMC_SEED")]
    seed: Option<u64>,
    /// Directory for result files (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    FilterLength,
    ZpLength,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    FixedFilter,
    FixedZp,
    Joint,
    Budget,
    PerSubbandBudget,
}

impl From<KindArg> for ProblemKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::FixedFilter => ProblemKind::FixedFilter,
            KindArg::FixedZp => ProblemKind::FixedZp,
            KindArg::Joint => ProblemKind::Joint,
            KindArg::Budget => ProblemKind::Budget,
            KindArg::PerSubbandBudget => ProblemKind::PerSubbandBudget,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Exhaustive,
    CoordinateDescent,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Exhaustive => Strategy::Exhaustive,
            StrategyArg::CoordinateDescent => Strategy::CoordinateDescent,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    IdealModel,
    Naive,
    InterferenceAware,
}

impl From<ModeArg> for BerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::IdealModel => BerMode::IdealModel,
            ModeArg::Naive => BerMode::Naive,
            ModeArg::InterferenceAware => BerMode::InterferenceAware,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed form vs Monte-Carlo power split plus the property suite.
    /// Writes powers.csv, sinr.csv and summary.json.
    Verify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Monte-Carlo trials; defaults to the scenario's `trials.power`.
        #[arg(long)]
        trials: Option<usize>,
        /// Skip the randomized property suite.
        #[arg(long)]
        no_properties: bool,
    },
    /// Capacity over filter length, guard length or both. Writes capacity.csv.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Filter lengths as `start:end[:step]`; defaults to the scenario's optimizer range.
        #[arg(long)]
        filter_range: Option<String>,
        /// Guard lengths as `start:end[:step]` (negative = tail cut).
        #[arg(long, allow_hyphen_values = true)]
        zp_range: Option<String>,
    },
    /// Capacity maximization. Writes optimize.json.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Overhead budget `L_F + L_ZP`; budget kinds default to every
        /// budget listed in the scenario.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, value_enum, default_value = "coordinate-descent")]
        strategy: StrategyArg,
        /// Filter-length stride for budget searches.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Bit error rate over an SNR grid. Writes ber.csv.
    Ber {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Equalizer modes for the UFMC link.
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["ideal-model", "naive", "interference-aware"])]
        modes: Vec<ModeArg>,
        /// Input SNR points in dB (comma separated, `inf` for no noise);
        /// defaults to the scenario grid.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Option<Vec<f64>>,
        /// Leave out the OFDM baseline with the same overhead.
        #[arg(long)]
        no_ofdm: bool,
        /// Cap on trials per SNR point; defaults to `trials.ber_max`.
        #[arg(long)]
        max_trials: Option<usize>,
        /// Stop a point after this many bit errors; defaults to `trials.ber_target_errors`.
        #[arg(long)]
        target_errors: Option<u64>,
    },
    /// Filter lengths meeting PBGR targets against N/N_m. Writes filterlen.csv.
    Filterlen {
        /// DFT size.
        #[arg(long, default_value_t = 512)]
        n: usize,
        /// Chebyshev sidelobe attenuation in dB.
        #[arg(long, default_value_t = 50.0)]
        attenuation_db: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print a scenario as JSON, or list the built-in names.
    Show {
        #[arg(long, conflicts_with_all = ["preset", "config"])]
        list: bool,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, requires = "preset")]
        paper_grid: bool,
    },
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Check(String),
}

impl From<ufmc::Error> for Failure {
    fn from(e: ufmc::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
    }
}
