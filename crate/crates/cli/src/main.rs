use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;
use tvopt::commands::{cmd_bounds, cmd_jacobian, cmd_solve, cmd_track, cmd_verify, CliError, Output, ScenarioSource};
use tvopt::scenarios::ConstantsMode;

/// Sensitivity bounds and tracking certificates for time-varying programs.
#[derive(Debug, Parser)]
#[command(name = "tvopt", version)]
struct Cli {
    /// Seed for the randomized suites.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario config (JSON).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in scenario: paper-ex1 or paper-ex2.
    #[arg(long, value_name = "NAME")]
    builtin: Option<String>,
    /// Step size, overriding the scenario's.
    #[arg(long, value_name = "H")]
    step: Option<f64>,
    /// Horizon, overriding the scenario's.
    #[arg(long, value_name = "T")]
    horizon: Option<f64>,
    /// How the cost-drift constant is measured: paper or strict.
    #[arg(long, value_name = "MODE", default_value = "paper")]
    constants: ConstantsMode,
}

impl ScenarioArgs {
    fn source(&self) -> ScenarioSource {
        ScenarioSource {
            config: self.config.clone(),
            builtin: self.builtin.clone(),
            step: self.step,
            horizon: self.horizon,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// KKT point and regularity at one time.
    Solve {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Time (the parameter) to solve at.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t: f64,
    },
    /// Time derivative of the KKT point.
    Jacobian {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t: f64,
        /// Compare against central differences of re-solved instances.
        #[arg(long)]
        fd_check: bool,
    },
    /// Lipschitz bound of the optimizer path and the tracking bound.
    Bounds {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Run the flow, write trajectory.csv and report.txt, certify.
    Track {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Run a verification suite, or `all`.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

fn init_logging() {
    let level = match std::env::var("TVOPT_LOG").as_deref() {
        Ok("quiet") => LevelFilter::Error,
        Ok("info") => LevelFilter::Info,
        Ok("debug") => LevelFilter::Debug,
        _ => LevelFilter::Warn,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn run(cli: Cli) -> Result<Output, CliError> {
    match cli.command {
        Command::Solve { scenario, t } => cmd_solve(&scenario.source().prepare()?, t),
        Command::Jacobian { scenario, t, fd_check } => cmd_jacobian(&scenario.source().prepare()?, t, fd_check),
        Command::Bounds { scenario } => cmd_bounds(&scenario.source().prepare()?, scenario.constants),
        Command::Track { scenario, out } => cmd_track(&scenario.source().prepare()?, scenario.constants, &out),
        Command::Verify { suite } => cmd_verify(&suite, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging();
    match run(cli) {
        Ok(out) => {
            print!("{}", out.text);
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
