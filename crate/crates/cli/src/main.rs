use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ctmass::commands::{self, CommandOptions, Method};
use ctmass::optimizer::PerturbMode;
use ctmass::scenario::ScenarioConfig;
use ctmass::Error;

#[derive(Parser)]
#[command(name = "ctmass", version, about = "Steer probability mass into a target along a controlled continuity equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
        /// Mollification radius of the perturbed problem.
        #[arg(long)]
        perturb: Option<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Theta)]
        perturb_mode: ModeArg,
        /// Write particle trajectories at the control breakpoints.
        #[arg(long)]
        trajectory: bool,
    },
    /// Evaluate the necessary-condition residual of a control.
    Check {
        #[command(flatten)]
        common: Common,
        /// Control CSV with columns t_start,t_end,u1,...
        #[arg(long, conflicts_with = "constant")]
        control: Option<PathBuf>,
        /// Constant control value, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        constant: Option<Vec<f64>>,
        #[arg(long)]
        perturb: Option<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Theta)]
        perturb_mode: ModeArg,
    },
    /// Solve perturbed problems for a decreasing list of radii.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1.., default_values_t = [0.2, 0.1, 0.05])]
        eps: Vec<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Full)]
        perturb_mode: ModeArg,
    },
    /// Exhaustive search over the candidate grid.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Built-in scenario name or path to a TOML config.
    scenario: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Record wall time in the result file.
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exhaustive,
    Sweep,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Theta,
}

impl From<ModeArg> for PerturbMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => PerturbMode::Full,
            ModeArg::Theta => PerturbMode::ThetaOnly,
        }
    }
}

fn options(common: &Common) -> CommandOptions {
    CommandOptions {
        seed: common.seed,
        tol: common.tol,
        timing: common.timing,
        ..CommandOptions::new(&common.out)
    }
}

fn load(common: &Common) -> Result<(ScenarioConfig, PathBuf), Error> {
    ScenarioConfig::load(&common.scenario)
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            common,
            method,
            perturb,
            perturb_mode,
            trajectory,
        } => {
            let (cfg, dir) = load(&common)?;
            let method = match method {
                MethodArg::Exhaustive => Method::Exhaustive,
                MethodArg::Sweep => Method::Sweep,
                MethodArg::Both => Method::Both,
            };
            let opts = CommandOptions {
                perturb,
                perturb_mode: perturb_mode.into(),
                trajectory,
                ..options(&common)
            };
            let rec = commands::cmd_run(&cfg, &dir, method, &opts)?;
            println!("{} value {}", rec.scenario, rec.value);
            if let Some(v) = rec.rebased_value {
                println!("rebased value {v}");
            }
            Ok(())
        }
        Command::Check {
            common,
            control,
            constant,
            perturb,
            perturb_mode,
        } => {
            let (cfg, dir) = load(&common)?;
            let u = commands::load_control(&cfg, control.as_deref(), constant.as_deref())?;
            let opts = CommandOptions {
                perturb,
                perturb_mode: perturb_mode.into(),
                ..options(&common)
            };
            let report = commands::cmd_check(&cfg, &dir, &u, &opts)?;
            let verdict = if report.pass { "PASS" } else { "FAIL" };
            println!("{verdict} max residual {} (tol {})", report.max_residual, report.tol);
            Ok(())
        }
        Command::Stability {
            common,
            eps,
            perturb_mode,
        } => {
            let (cfg, dir) = load(&common)?;
            let rows = commands::cmd_stability(&cfg, &dir, &eps, perturb_mode.into(), &options(&common))?;
            println!("eps,value,rebased_value,residual_max");
            for r in rows {
                println!("{},{},{},{}", r.eps, r.value, r.rebased_value, r.residual_max);
            }
            Ok(())
        }
        Command::Oracle { common } => {
            let (cfg, dir) = load(&common)?;
            let rec = commands::cmd_oracle(&cfg, &dir, &options(&common))?;
            println!("{} value {}", rec.scenario, rec.value);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
