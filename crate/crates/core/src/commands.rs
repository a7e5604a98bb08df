//! The `run`, `check`, `stability` and `oracle` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controls::PiecewiseControl;
use crate::error::{Error, Result};
use crate::flows::ClosedField;
use crate::io::{self, RunRecord};
use crate::measures::Measure;
use crate::optimality::{optimality_residual, ResidualConfig, ResidualReport};
use crate::optimizer::{exhaustive, perturb, solve, stability_experiment, PerturbMode, PerturbOptions, Problem, StabilityRow};
use crate::scenario::ScenarioConfig;
use crate::transport::solve_particles;

pub const RECORD_FILE: &str = "result.json";
pub const CONTROL_FILE: &str = "control.csv";
pub const RESIDUAL_FILE: &str = "residuals.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const STABILITY_FILE: &str = "stability.csv";

/// Particles drawn from an analytic initial density for trajectory output.
const TRAJECTORY_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exhaustive,
    Sweep,
    Both,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Exhaustive => "exhaustive",
            Method::Sweep => "sweep",
            Method::Both => "both",
        }
    }
}

/// Options shared by the commands.
#[derive(Debug, Clone)]
pub struct CommandOptions {
    pub out: PathBuf,
    pub perturb: Option<f64>,
    pub perturb_mode: PerturbMode,
    /// Overrides the configured seed.
    pub seed: Option<u64>,
    /// Overrides the configured residual tolerance.
    pub tol: Option<f64>,
    pub timing: bool,
    pub trajectory: bool,
}

impl CommandOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        CommandOptions {
            out: out.into(),
            perturb: None,
            perturb_mode: PerturbMode::ThetaOnly,
            seed: None,
            tol: None,
            timing: false,
            trajectory: false,
        }
    }
}

/// A loaded scenario with command-line overrides applied.
pub struct Prepared {
    pub config: ScenarioConfig,
    pub base: Problem,
    /// The problem actually solved: perturbed when requested.
    pub problem: Problem,
    pub eps: Option<f64>,
    pub tol: f64,
}

pub fn prepare(config: &ScenarioConfig, base_dir: &Path, opts: &CommandOptions) -> Result<Prepared> {
    let mut config = config.clone();
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    let tol = opts.tol.unwrap_or(config.solver.residual_tol);
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    config.solver.residual_tol = tol;
    let base = config.problem(base_dir)?;
    let problem = match opts.perturb {
        Some(eps) => {
            let popts = PerturbOptions {
                mode: opts.perturb_mode,
                seed: config.seed,
                ..Default::default()
            };
            perturb(&base, eps, &popts)?.problem
        }
        None => base.clone(),
    };
    Ok(Prepared {
        config,
        base,
        problem,
        eps: opts.perturb,
        tol,
    })
}

fn write_trajectory(prep: &Prepared, control: &PiecewiseControl, dir: &Path) -> Result<()> {
    let particles = match &prep.base.theta {
        Measure::Particles(p) => p.clone(),
        Measure::Density(d) => {
            let mut rng = ChaCha8Rng::seed_from_u64(prep.config.seed);
            d.sample(TRAJECTORY_SAMPLES, &mut rng)?
        }
    };
    let closed = ClosedField::piecewise(prep.base.field.clone(), control, prep.base.step)?;
    let traj = solve_particles(&particles, &closed, control.grid())?;
    io::write_trajectory(&dir.join(TRAJECTORY_FILE), &traj)
}

fn elapsed_ms(start: Instant, timing: bool) -> Option<u64> {
    timing.then(|| start.elapsed().as_millis() as u64)
}

/// Solves the configured problem and writes the record, the control and,
/// after a sweep, the final residuals.
pub fn cmd_run(config: &ScenarioConfig, base_dir: &Path, method: Method, opts: &CommandOptions) -> Result<RunRecord> {
    let start = Instant::now();
    let prep = prepare(config, base_dir, opts)?;
    std::fs::create_dir_all(&opts.out)?;
    let grid = prep.config.u_grid()?;
    let (control, value, report) = match method {
        Method::Exhaustive => {
            let ex = exhaustive(&prep.problem, &grid, prep.problem.cells)?;
            (ex.control, ex.value, None)
        }
        Method::Sweep | Method::Both => {
            if method == Method::Both {
                exhaustive(&prep.problem, &grid, prep.problem.cells)?;
            }
            let solved = solve(&prep.problem, &grid, &prep.config.sweep_config())?;
            let value = solved.value();
            (solved.sweep.control, value, Some(solved.sweep.report))
        }
    };
    let rebased_value = match prep.eps {
        Some(_) => Some(prep.base.evaluate(&control)?.value),
        None => None,
    };
    io::write_control(&opts.out.join(CONTROL_FILE), &control)?;
    if let Some(r) = &report {
        io::write_residuals(&opts.out.join(RESIDUAL_FILE), r)?;
    }
    if opts.trajectory {
        write_trajectory(&prep, &control, &opts.out)?;
    }
    let record = RunRecord {
        scenario: prep.config.scenario.clone(),
        method: method.name().into(),
        eps: prep.eps,
        value,
        rebased_value,
        residual_max: report.map(|r| r.max_residual),
        runtime_ms: elapsed_ms(start, opts.timing),
        control_file: CONTROL_FILE.into(),
    };
    io::write_record(&opts.out.join(RECORD_FILE), &record)?;
    Ok(record)
}

/// Exhaustive search only.
pub fn cmd_oracle(config: &ScenarioConfig, base_dir: &Path, opts: &CommandOptions) -> Result<RunRecord> {
    cmd_run(config, base_dir, Method::Exhaustive, opts)
}

/// Residual of the necessary condition for a given control.
pub fn cmd_check(
    config: &ScenarioConfig,
    base_dir: &Path,
    control: &PiecewiseControl,
    opts: &CommandOptions,
) -> Result<ResidualReport> {
    let start = Instant::now();
    let prep = prepare(config, base_dir, opts)?;
    let p = &prep.problem;
    if (control.horizon() - p.horizon).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "control ends at {} but the horizon is {}",
            control.horizon(),
            p.horizon
        )));
    }
    let rcfg = ResidualConfig {
        mesh_h: p.mesh_h,
        step: p.step,
        tol: prep.tol,
        refine_box: true,
    };
    let report = optimality_residual(&p.theta, control, &p.field, &p.target, &p.set, &prep.config.u_grid()?, None, &rcfg)?;
    std::fs::create_dir_all(&opts.out)?;
    io::write_residuals(&opts.out.join(RESIDUAL_FILE), &report)?;
    io::write_control(&opts.out.join(CONTROL_FILE), control)?;
    let record = RunRecord {
        scenario: prep.config.scenario.clone(),
        method: "check".into(),
        eps: prep.eps,
        value: p.evaluate(control)?.value,
        rebased_value: None,
        residual_max: Some(report.max_residual),
        runtime_ms: elapsed_ms(start, opts.timing),
        control_file: CONTROL_FILE.into(),
    };
    io::write_record(&opts.out.join(RECORD_FILE), &record)?;
    Ok(report)
}

/// Stability table over a decreasing list of perturbation radii.
pub fn cmd_stability(
    config: &ScenarioConfig,
    base_dir: &Path,
    eps_list: &[f64],
    mode: PerturbMode,
    opts: &CommandOptions,
) -> Result<Vec<StabilityRow>> {
    let prep = prepare(
        config,
        base_dir,
        &CommandOptions {
            perturb: None,
            ..opts.clone()
        },
    )?;
    let popts = PerturbOptions {
        mode,
        seed: prep.config.seed,
        ..Default::default()
    };
    let rows = stability_experiment(&prep.base, eps_list, &prep.config.u_grid()?, &popts, &prep.config.sweep_config())?;
    std::fs::create_dir_all(&opts.out)?;
    io::write_stability(&opts.out.join(STABILITY_FILE), &rows)?;
    Ok(rows)
}

/// Reads a control CSV, or builds a constant control on the configured grid.
pub fn load_control(config: &ScenarioConfig, file: Option<&Path>, constant: Option<&[f64]>) -> Result<PiecewiseControl> {
    match (file, constant) {
        (Some(path), None) => io::read_control(path),
        (None, Some(v)) => PiecewiseControl::constant(config.solver.horizon, config.control.cells, v),
        _ => Err(Error::InvalidArgument("give exactly one of a control file or a constant control".into())),
    }
}
