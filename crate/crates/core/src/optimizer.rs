//! Exhaustive oracle, the outflow sweep, mollified problems and the
//! stability experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controls::{ControlSet, PiecewiseControl};
use crate::error::{Error, Result};
use crate::flows::{effective_lipschitz, ControlledField};
use crate::geom::BoxRegion;
use crate::measures::{mollify, neighborhood, Measure, ParticleMeasure, TargetSet};
use crate::optimality::{gate, optimality_residual, ResidualConfig, ResidualReport};
use crate::quadrature::QuadratureConfig;
use crate::transport::{objective, ControlRef, ObjectiveValue};

/// Largest number of objective evaluations the exhaustive oracle will attempt.
pub const EXHAUSTIVE_BUDGET: u128 = 1_000_000;

/// Maximize `μ(T)(A)` over piecewise-constant controls with values in `U`.
#[derive(Clone)]
pub struct Problem {
    pub field: ControlledField,
    pub set: ControlSet,
    pub theta: Measure,
    pub target: TargetSet,
    pub horizon: f64,
    pub cells: usize,
    /// RK4 step.
    pub step: f64,
    pub quad: QuadratureConfig,
    /// Node spacing of boundary meshes.
    pub mesh_h: f64,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.cells == 0 {
            return Err(Error::InvalidArgument("need at least one control cell".into()));
        }
        if !(self.step > 0.0) || !(self.mesh_h > 0.0) {
            return Err(Error::InvalidArgument("step and mesh spacing must be positive".into()));
        }
        self.set.validate()?;
        let n = self.field.state_dim();
        for got in [self.theta.dim(), self.target.dim()] {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        if self.set.dim() != self.field.control_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.field.control_dim(),
                got: self.set.dim(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, u: &PiecewiseControl) -> Result<ObjectiveValue> {
        objective(&self.theta, ControlRef::Usual(u), &self.field, &self.target, self.step, &self.quad)
    }

    pub fn constant_control(&self, value: &[f64]) -> Result<PiecewiseControl> {
        PiecewiseControl::constant(self.horizon, self.cells, value)
    }

    /// Candidate grid over `U`: 16 directions and the center for planar balls.
    pub fn default_grid(&self) -> Vec<Vec<f64>> {
        self.set.grid(16)
    }

    fn residual_config(&self, tol: f64) -> ResidualConfig {
        ResidualConfig {
            mesh_h: self.mesh_h,
            step: self.step,
            tol,
            refine_box: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    /// Grid index of the value on each cell.
    pub index: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    pub best_index: Vec<usize>,
    pub control: PiecewiseControl,
    pub value: f64,
    pub table: Vec<TableRow>,
}

/// Every control with `cells` values from `u_grid`, in lexicographic index order.
/// The first maximizer wins ties.
pub fn exhaustive(problem: &Problem, u_grid: &[Vec<f64>], cells: usize) -> Result<ExhaustiveResult> {
    problem.validate()?;
    if u_grid.is_empty() || cells == 0 {
        return Err(Error::InvalidArgument("exhaustive search needs a grid and at least one cell".into()));
    }
    let count = (u_grid.len() as u128).checked_pow(cells as u32).unwrap_or(u128::MAX);
    if count > EXHAUSTIVE_BUDGET {
        return Err(Error::BudgetExceeded {
            count,
            budget: EXHAUSTIVE_BUDGET,
        });
    }
    for u in u_grid {
        if !problem.set.contains(u) {
            return Err(Error::ControlOutsideSet { value: u.clone() });
        }
    }
    let mut index = vec![0usize; cells];
    let mut table = Vec::with_capacity(count as usize);
    let mut best: Option<(Vec<usize>, PiecewiseControl, f64)> = None;
    loop {
        let values = index.iter().map(|&i| u_grid[i].clone()).collect();
        let control = PiecewiseControl::uniform(problem.horizon, values)?;
        let value = problem.evaluate(&control)?.value;
        table.push(TableRow {
            index: index.clone(),
            value,
        });
        if best.as_ref().is_none_or(|b| value > b.2) {
            best = Some((index.clone(), control, value));
        }
        let mut k = cells;
        loop {
            if k == 0 {
                let (best_index, control, value) = best.expect("at least one row");
                return Ok(ExhaustiveResult {
                    best_index,
                    control,
                    value,
                    table,
                });
            }
            k -= 1;
            index[k] += 1;
            if index[k] < u_grid.len() {
                break;
            }
            index[k] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub max_iters: usize,
    /// Residuals at or below this are treated as stationary.
    pub tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { max_iters: 20, tol: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepStep {
    pub iteration: usize,
    pub value: f64,
    pub max_residual: f64,
    pub accepted: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub control: PiecewiseControl,
    pub value: f64,
    pub trace: Vec<SweepStep>,
    pub report: ResidualReport,
}

/// Largest number of violating cells whose joint replacements are all tried.
const BLOCK_CELLS: usize = 10;

/// Best joint replacement of two or more violating cells by their minimizers.
/// Beyond `BLOCK_CELLS` cells only prefixes of the residual order are tried.
fn best_block(
    problem: &Problem,
    control: &PiecewiseControl,
    report: &ResidualReport,
    order: &[usize],
    visited: &mut Vec<PiecewiseControl>,
) -> Result<Option<(PiecewiseControl, f64, usize)>> {
    let subsets: Vec<Vec<usize>> = if order.len() <= BLOCK_CELLS {
        (1u32..(1 << order.len()))
            .filter(|mask| mask.count_ones() >= 2)
            .map(|mask| (0..order.len()).filter(|k| mask & (1 << k) != 0).map(|k| order[k]).collect())
            .collect()
    } else {
        (2..=order.len()).map(|j| order[..j].to_vec()).collect()
    };
    let mut best: Option<(PiecewiseControl, f64, usize)> = None;
    for cells in subsets {
        let mut cand = control.clone();
        for &cell in &cells {
            cand = cand.with_value(cell, report.rows[cell].argmin.clone());
        }
        if visited.iter().any(|v| v.values() == cand.values()) {
            continue;
        }
        let value = problem.evaluate(&cand)?.value;
        visited.push(cand.clone());
        if best.as_ref().is_none_or(|b| value > b.1) {
            best = Some((cand, value, cells.len()));
        }
    }
    Ok(best)
}

/// Replaces cell values by outflow minimizers, keeping a change only when
/// the objective does not decrease. Cells are tried one at a time by
/// decreasing residual, then jointly when no single change is kept.
pub fn sweep(problem: &Problem, init: &PiecewiseControl, u_grid: &[Vec<f64>], cfg: &SweepConfig) -> Result<SweepResult> {
    problem.validate()?;
    gate(&problem.theta, &problem.target, &problem.field)?;
    if init.cells() == 0 || (init.horizon() - problem.horizon).abs() > 1e-12 {
        return Err(Error::InvalidArgument("initial control does not match the horizon".into()));
    }
    let rcfg = problem.residual_config(cfg.tol);
    let mut control = init.clone();
    let mut value = problem.evaluate(&control)?.value;
    let mut visited = vec![control.clone()];
    let mut trace = Vec::new();
    for iteration in 0..cfg.max_iters.max(1) {
        let report = optimality_residual(&problem.theta, &control, &problem.field, &problem.target, &problem.set, u_grid, None, &rcfg)?;
        let mut accepted = 0;
        if report.max_residual > cfg.tol {
            let mut order: Vec<usize> = (0..report.rows.len()).filter(|&i| report.rows[i].res > cfg.tol).collect();
            order.sort_by(|&a, &b| report.rows[b].res.total_cmp(&report.rows[a].res).then(a.cmp(&b)));
            for &cell in &order {
                let cand = control.with_value(cell, report.rows[cell].argmin.clone());
                if visited.iter().any(|v| v.values() == cand.values()) {
                    continue;
                }
                let cand_value = problem.evaluate(&cand)?.value;
                visited.push(cand.clone());
                if cand_value >= value {
                    control = cand;
                    value = cand_value;
                    accepted += 1;
                }
            }
            if accepted == 0 {
                if let Some((cand, cand_value, size)) = best_block(problem, &control, &report, &order, &mut visited)? {
                    if cand_value >= value {
                        control = cand;
                        value = cand_value;
                        accepted = size;
                    }
                }
            }
        }
        trace.push(SweepStep {
            iteration,
            value,
            max_residual: report.max_residual,
            accepted,
        });
        if accepted == 0 {
            return Ok(SweepResult {
                control,
                value,
                trace,
                report,
            });
        }
    }
    let report = optimality_residual(&problem.theta, &control, &problem.field, &problem.target, &problem.set, u_grid, None, &rcfg)?;
    Ok(SweepResult {
        control,
        value,
        trace,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub seed: ExhaustiveResult,
    pub sweep: SweepResult,
}

impl SolveResult {
    pub fn control(&self) -> &PiecewiseControl {
        &self.sweep.control
    }

    pub fn value(&self) -> f64 {
        self.sweep.value
    }
}

/// Sweep seeded by an exhaustive search with at most two cells and 17 grid points.
pub fn solve(problem: &Problem, u_grid: &[Vec<f64>], cfg: &SweepConfig) -> Result<SolveResult> {
    problem.validate()?;
    gate(&problem.theta, &problem.target, &problem.field)?;
    let coarse_cells = if problem.cells.is_multiple_of(2) { 2 } else { 1 };
    let stride = u_grid.len().div_ceil(17).max(1);
    let coarse_grid: Vec<Vec<f64>> = u_grid.iter().step_by(stride).cloned().collect();
    let seed = exhaustive(problem, &coarse_grid, coarse_cells)?;
    let repeat = problem.cells / coarse_cells;
    let values: Vec<Vec<f64>> = seed
        .best_index
        .iter()
        .flat_map(|&i| std::iter::repeat_n(coarse_grid[i].clone(), repeat))
        .collect();
    let init = PiecewiseControl::uniform(problem.horizon, values)?;
    let sweep = sweep(problem, &init, u_grid, cfg)?;
    Ok(SolveResult { seed, sweep })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    /// Mollify `θ` and inflate `A` by `rε`.
    Full,
    /// Mollify `θ` only.
    ThetaOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbOptions {
    pub mode: PerturbMode,
    /// Particles drawn from an analytic `θ` before mollifying.
    pub samples: usize,
    pub seed: u64,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        PerturbOptions {
            mode: PerturbMode::Full,
            samples: 100_000,
            seed: 0,
        }
    }
}

/// The mollified problem: `θ ∗ η_ε` steered into `A_{rε}`.
#[derive(Clone)]
pub struct PerturbedProblem {
    pub base: Problem,
    pub eps: f64,
    /// `max{1, e^{LT}}`.
    pub r: f64,
    /// Whether `L` was declared by the field rather than estimated.
    pub lipschitz_declared: bool,
    pub mode: PerturbMode,
    pub problem: Problem,
}

impl PerturbedProblem {
    pub fn theta_eps(&self) -> &Measure {
        &self.problem.theta
    }

    pub fn target(&self) -> &TargetSet {
        &self.problem.target
    }
}

fn particles_of(theta: &Measure, opts: &PerturbOptions) -> Result<ParticleMeasure> {
    match theta {
        Measure::Particles(p) => Ok(p.clone()),
        Measure::Density(d) => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            d.sample(opts.samples, &mut rng)
        }
    }
}

fn lipschitz_domain(problem: &Problem) -> BoxRegion {
    let theta_box = match &problem.theta {
        Measure::Particles(p) => p.bounding_box(),
        Measure::Density(d) => d.support().clone(),
    };
    let t = problem.target.bounding_box();
    let lo = theta_box.lo.iter().zip(&t.lo).map(|(a, b)| a.min(*b)).collect();
    let hi = theta_box.hi.iter().zip(&t.hi).map(|(a, b)| a.max(*b)).collect();
    BoxRegion::new(lo, hi).inflate(0.5)
}

pub fn perturb(problem: &Problem, eps: f64, opts: &PerturbOptions) -> Result<PerturbedProblem> {
    problem.validate()?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("perturbation radius must be positive, got {eps}")));
    }
    let (l, declared) = effective_lipschitz(&problem.field, &lipschitz_domain(problem), problem.horizon, &problem.default_grid())?;
    let r = (l * problem.horizon).exp().max(1.0);
    let theta_eps = mollify(&particles_of(&problem.theta, opts)?, eps)?;
    let target = match opts.mode {
        PerturbMode::Full => neighborhood(&problem.target, r * eps)?,
        PerturbMode::ThetaOnly => problem.target.clone(),
    };
    let perturbed = Problem {
        theta: theta_eps.into(),
        target,
        ..problem.clone()
    };
    Ok(PerturbedProblem {
        base: problem.clone(),
        eps,
        r,
        lipschitz_declared: declared,
        mode: opts.mode,
        problem: perturbed,
    })
}

#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub eps: f64,
    /// Optimal value of the perturbed problem.
    pub value: f64,
    /// The perturbed optimizer evaluated on the original `θ` and `A`.
    pub rebased_value: f64,
    pub residual_max: f64,
    pub control: PiecewiseControl,
}

/// Solves the perturbed problem for each `ε` of a decreasing list.
pub fn stability_experiment(
    problem: &Problem,
    eps_list: &[f64],
    u_grid: &[Vec<f64>],
    opts: &PerturbOptions,
    cfg: &SweepConfig,
) -> Result<Vec<StabilityRow>> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("eps list must be nonempty and strictly decreasing".into()));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let perturbed = perturb(problem, eps, opts)?;
        let solved = solve(&perturbed.problem, u_grid, cfg)?;
        let rebased_value = problem.evaluate(solved.control())?.value;
        rows.push(StabilityRow {
            eps,
            value: solved.value(),
            rebased_value,
            residual_max: solved.sweep.report.max_residual,
            control: solved.sweep.control.clone(),
        });
    }
    Ok(rows)
}
