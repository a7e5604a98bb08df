//! Usual controls, cell-constant generalized controls and the operations
//! relating them: averaging, needle variations, chattering and Filippov
//! extraction for control-affine fields.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flows::{ClosedField, ControlSource, ControlledField};
use crate::geom::{dist, norm};

/// Tolerance for membership of control values in `U`.
pub const CONTROL_TOL: f64 = 1e-10;
const ATOM_SUM_TOL: f64 = 1e-12;

/// Compact control set `U ⊂ ℝᵐ`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Finite(Vec<Vec<f64>>),
}

impl ControlSet {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        let u = ControlSet::Box { lo: vec![lo], hi: vec![hi] };
        u.validate()?;
        Ok(u)
    }

    pub fn unit_ball(m: usize) -> Self {
        ControlSet::Ball {
            center: vec![0.0; m],
            radius: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControlSet::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
                }
                if lo.is_empty() || lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                    return Err(Error::InvalidArgument("control box needs lo ≤ hi".into()));
                }
            }
            ControlSet::Ball { center, radius } => {
                if center.is_empty() || !(*radius >= 0.0) {
                    return Err(Error::InvalidArgument("control ball needs a center and radius ≥ 0".into()));
                }
            }
            ControlSet::Finite(points) => {
                let first = points
                    .first()
                    .ok_or_else(|| Error::InvalidArgument("finite control set is empty".into()))?;
                if let Some(p) = points.iter().find(|p| p.len() != first.len()) {
                    return Err(Error::DimensionMismatch { expected: first.len(), got: p.len() });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box { lo, .. } => lo.len(),
            ControlSet::Ball { center, .. } => center.len(),
            ControlSet::Finite(p) => p[0].len(),
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        if u.len() != self.dim() {
            return false;
        }
        match self {
            ControlSet::Box { lo, hi } => u
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(x, (a, b))| *x >= a - CONTROL_TOL && *x <= b + CONTROL_TOL),
            ControlSet::Ball { center, radius } => dist(u, center) <= radius + CONTROL_TOL,
            ControlSet::Finite(points) => points.iter().any(|p| dist(p, u) <= CONTROL_TOL),
        }
    }

    /// Nearest point of `U` (Euclidean projection).
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        match self {
            ControlSet::Box { lo, hi } => u.iter().zip(lo.iter().zip(hi)).map(|(x, (a, b))| x.clamp(*a, *b)).collect(),
            ControlSet::Ball { center, radius } => {
                let d = dist(u, center);
                if d <= *radius {
                    u.to_vec()
                } else {
                    center.iter().zip(u).map(|(c, x)| c + (x - c) * radius / d).collect()
                }
            }
            ControlSet::Finite(points) => points
                .iter()
                .min_by(|a, b| dist(a, u).total_cmp(&dist(b, u)))
                .cloned()
                .expect("finite set is nonempty"),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ControlSet::Box { lo, hi } => dist(lo, hi),
            ControlSet::Ball { radius, .. } => 2.0 * radius,
            ControlSet::Finite(points) => {
                let mut d: f64 = 0.0;
                for (i, p) in points.iter().enumerate() {
                    for q in &points[i + 1..] {
                        d = d.max(dist(p, q));
                    }
                }
                d
            }
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ControlSet::Box { lo, hi } => (lo.clone(), hi.clone()),
            ControlSet::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            ControlSet::Finite(points) => {
                let m = points[0].len();
                let mut lo = vec![f64::INFINITY; m];
                let mut hi = vec![f64::NEG_INFINITY; m];
                for p in points {
                    for k in 0..m {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Candidate grid used for minimization over `U`.
    ///
    /// Finite sets are used as they are. Balls give `directions` boundary
    /// points followed by the center (in one dimension the two endpoints and
    /// the center, in three or more the `±` axis points and the center).
    /// Boxes give the `{lo, mid, hi}ᵐ` lattice: vertices, edge midpoints and,
    /// in two dimensions, the center.
    pub fn grid(&self, directions: usize) -> Vec<Vec<f64>> {
        match self {
            ControlSet::Finite(points) => points.clone(),
            ControlSet::Ball { center, radius } => {
                let m = center.len();
                let mut out = Vec::new();
                if m == 1 {
                    out.push(vec![center[0] - radius]);
                    out.push(vec![center[0]]);
                    out.push(vec![center[0] + radius]);
                    return out;
                }
                if m == 2 {
                    for k in 0..directions {
                        let a = 2.0 * std::f64::consts::PI * k as f64 / directions as f64;
                        let (s, c) = a.sin_cos();
                        out.push(vec![center[0] + radius * c, center[1] + radius * s]);
                    }
                } else {
                    for k in 0..m {
                        for sign in [1.0, -1.0] {
                            let mut p = center.clone();
                            p[k] += sign * radius;
                            out.push(p);
                        }
                    }
                }
                out.push(center.clone());
                out
            }
            ControlSet::Box { lo, hi } => {
                let m = lo.len();
                let mut idx = vec![0usize; m];
                let mut out = Vec::new();
                loop {
                    out.push(
                        (0..m)
                            .map(|k| match idx[k] {
                                0 => lo[k],
                                1 => 0.5 * (lo[k] + hi[k]),
                                _ => hi[k],
                            })
                            .collect(),
                    );
                    let mut k = m;
                    loop {
                        if k == 0 {
                            return out;
                        }
                        k -= 1;
                        idx[k] += 1;
                        if idx[k] < 3 {
                            break;
                        }
                        idx[k] = 0;
                    }
                }
            }
        }
    }

    /// Points of `U` on a lattice with `per_axis` intervals over its bounding box.
    pub fn lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        if let ControlSet::Finite(points) = self {
            return points.clone();
        }
        let (lo, hi) = self.bounds();
        let m = lo.len();
        let mut idx = vec![0usize; m];
        let mut out = Vec::new();
        loop {
            let p: Vec<f64> = (0..m)
                .map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / per_axis as f64)
                .collect();
            if self.contains(&p) {
                out.push(p);
            }
            let mut k = m;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] <= per_axis {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

fn check_grid(grid: &[f64], cells: usize) -> Result<()> {
    if grid.len() != cells + 1 || cells == 0 {
        return Err(Error::InvalidArgument(format!(
            "control grid needs {} times for {} cells, got {}",
            cells + 1,
            cells,
            grid.len()
        )));
    }
    if grid[0] != 0.0 {
        return Err(Error::InvalidArgument("control grid must start at 0".into()));
    }
    if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("control grid must be strictly increasing".into()));
    }
    Ok(())
}

fn cell_of(grid: &[f64], t: f64) -> Result<usize> {
    let horizon = *grid.last().expect("grid has endpoints");
    let slack = 1e-12 * horizon.max(1.0);
    if !(t >= -slack && t <= horizon + slack) {
        return Err(Error::TimeOutOfRange { t, horizon });
    }
    let k = grid.partition_point(|&g| g <= t);
    Ok(k.clamp(1, grid.len() - 1) - 1)
}

/// `T/K`-spaced grid of `K` cells on `[0, T]`.
pub fn uniform_grid(horizon: f64, cells: usize) -> Vec<f64> {
    (0..=cells)
        .map(|i| if i == cells { horizon } else { horizon * i as f64 / cells as f64 })
        .collect()
}

/// Piecewise-constant control: value `i` is active on `[tᵢ, tᵢ₊₁)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseControl {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PiecewiseControl {
    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        check_grid(&grid, values.len())?;
        let m = values[0].len();
        if let Some(v) = values.iter().find(|v| v.len() != m) {
            return Err(Error::DimensionMismatch { expected: m, got: v.len() });
        }
        if let Some(v) = values.iter().find(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::ControlOutsideSet { value: v.clone() });
        }
        Ok(PiecewiseControl { grid, values })
    }

    pub fn constant(horizon: f64, cells: usize, value: &[f64]) -> Result<Self> {
        Self::new(uniform_grid(horizon, cells), vec![value.to_vec(); cells])
    }

    pub fn uniform(horizon: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(uniform_grid(horizon, values.len()), values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("grid has endpoints")
    }

    pub fn control_dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn cell_index(&self, t: f64) -> Result<usize> {
        cell_of(&self.grid, t)
    }

    pub fn value_at(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.values[self.cell_index(t)?])
    }

    /// Midpoints of the cells (Lebesgue points of the control).
    pub fn midpoints(&self) -> Vec<f64> {
        self.grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn with_value(&self, cell: usize, value: Vec<f64>) -> Self {
        let mut out = self.clone();
        out.values[cell] = value;
        out
    }

    pub fn check_in(&self, set: &ControlSet) -> Result<()> {
        if self.control_dim() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                got: self.control_dim(),
            });
        }
        match self.values.iter().find(|v| !set.contains(v)) {
            Some(v) => Err(Error::ControlOutsideSet { value: v.clone() }),
            None => Ok(()),
        }
    }

    /// Drops zero-length cells and merges equal neighbours.
    pub fn simplified(&self) -> Self {
        let mut grid = vec![self.grid[0]];
        let mut values: Vec<Vec<f64>> = Vec::new();
        for (i, v) in self.values.iter().enumerate() {
            let end = self.grid[i + 1];
            if end <= *grid.last().unwrap() {
                continue;
            }
            if values.last() == Some(v) {
                *grid.last_mut().unwrap() = end;
            } else {
                values.push(v.clone());
                grid.push(end);
            }
        }
        PiecewiseControl { grid, values }
    }

    /// True when both controls agree at every time (up to the cell layout).
    pub fn equal_ae(&self, other: &PiecewiseControl) -> bool {
        self.simplified() == other.simplified()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub omega: Vec<f64>,
    pub p: f64,
}

/// Cell-constant Young measure: a finite probability on `U` per control cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedControl {
    grid: Vec<f64>,
    cells: Vec<Vec<Atom>>,
}

impl GeneralizedControl {
    pub fn new(grid: Vec<f64>, cells: Vec<Vec<Atom>>) -> Result<Self> {
        check_grid(&grid, cells.len())?;
        let m = cells
            .first()
            .and_then(|c| c.first())
            .map(|a| a.omega.len())
            .ok_or_else(|| Error::InvalidArgument("generalized control cell without atoms".into()))?;
        for (i, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::InvalidArgument(format!("cell {i} has no atoms")));
            }
            if let Some(a) = cell.iter().find(|a| a.omega.len() != m) {
                return Err(Error::DimensionMismatch { expected: m, got: a.omega.len() });
            }
            if cell.iter().any(|a| !(a.p >= 0.0)) {
                return Err(Error::InvalidArgument(format!("cell {i} has a negative atom weight")));
            }
            let total: f64 = cell.iter().map(|a| a.p).sum();
            if (total - 1.0).abs() > ATOM_SUM_TOL {
                return Err(Error::InvalidArgument(format!("cell {i} atom weights sum to {total}")));
            }
        }
        Ok(GeneralizedControl { grid, cells })
    }

    /// The same atoms on every cell of a uniform grid.
    pub fn constant(horizon: f64, cells: usize, atoms: Vec<Atom>) -> Result<Self> {
        Self::new(uniform_grid(horizon, cells), vec![atoms; cells])
    }

    /// Dirac disintegration `ν_t = δ_{u(t)}`.
    pub fn from_piecewise(u: &PiecewiseControl) -> Self {
        GeneralizedControl {
            grid: u.grid.clone(),
            cells: u
                .values
                .iter()
                .map(|v| vec![Atom { omega: v.clone(), p: 1.0 }])
                .collect(),
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn cells(&self) -> &[Vec<Atom>] {
        &self.cells
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("grid has endpoints")
    }

    pub fn control_dim(&self) -> usize {
        self.cells[0][0].omega.len()
    }

    pub fn cell_index(&self, t: f64) -> Result<usize> {
        cell_of(&self.grid, t)
    }

    pub fn atoms_at(&self, t: f64) -> Result<&[Atom]> {
        Ok(&self.cells[self.cell_index(t)?])
    }

    pub fn check_in(&self, set: &ControlSet) -> Result<()> {
        for cell in &self.cells {
            if let Some(a) = cell.iter().find(|a| !set.contains(&a.omega)) {
                return Err(Error::ControlOutsideSet { value: a.omega.clone() });
            }
        }
        Ok(())
    }
}

/// `v̄(t,x) = Σₖ pₖ v(t,x,ωₖ)` as a closed field with integrator step `h`.
pub fn averaged_field(field: &ControlledField, nu: &GeneralizedControl, h: f64) -> Result<ClosedField> {
    if nu.control_dim() != field.control_dim() {
        return Err(Error::DimensionMismatch {
            expected: field.control_dim(),
            got: nu.control_dim(),
        });
    }
    ClosedField::new(field.clone(), ControlSource::Averaged(nu.clone()), h, nu.horizon())
}

/// Replaces `ū` by `ω` on `[τ−ε, τ]`.
pub fn needle_variation(
    ubar: &PiecewiseControl,
    set: &ControlSet,
    tau: f64,
    eps: f64,
    omega: &[f64],
) -> Result<PiecewiseControl> {
    if !set.contains(omega) {
        return Err(Error::ControlOutsideSet { value: omega.to_vec() });
    }
    let horizon = ubar.horizon();
    if !(tau > 0.0 && tau <= horizon) {
        return Err(Error::TimeOutOfRange { t: tau, horizon });
    }
    if !(eps >= 0.0 && eps <= tau) {
        return Err(Error::InvalidArgument(format!("needle width {eps} must lie in [0, {tau}]")));
    }
    if eps == 0.0 {
        return Ok(ubar.simplified());
    }
    let start = tau - eps;
    let mut grid = vec![0.0];
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut push = |end: f64, v: &[f64], grid: &mut Vec<f64>| {
        if end > *grid.last().unwrap() {
            grid.push(end);
            values.push(v.to_vec());
        }
    };
    for (i, v) in ubar.values.iter().enumerate() {
        let (a, b) = (ubar.grid[i], ubar.grid[i + 1]);
        push(b.min(start), v, &mut grid);
        if a < tau && b > start {
            push(b.min(tau), omega, &mut grid);
        }
        push(b, v, &mut grid);
    }
    Ok(PiecewiseControl { grid, values }.simplified())
}

/// Usual control cycling through the atoms of each cell with the given
/// period, each atom held for its weight's share of a period.
pub fn chattering(nu: &GeneralizedControl, period: f64) -> Result<PiecewiseControl> {
    if !(period > 0.0) {
        return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
    }
    let mut grid = vec![0.0];
    let mut values = Vec::new();
    for (i, atoms) in nu.cells.iter().enumerate() {
        let (a, b) = (nu.grid[i], nu.grid[i + 1]);
        let periods = ((b - a) / period).round().max(1.0) as usize;
        let len = (b - a) / periods as f64;
        for q in 0..periods {
            let base = a + len * q as f64;
            let mut acc = 0.0;
            for atom in atoms.iter().filter(|a| a.p > 0.0) {
                acc += atom.p;
                let end = if q + 1 == periods && acc >= 1.0 - ATOM_SUM_TOL {
                    b
                } else {
                    base + len * acc.min(1.0)
                };
                if end > *grid.last().unwrap() {
                    grid.push(end);
                    values.push(atom.omega.clone());
                }
            }
        }
        *grid.last_mut().unwrap() = b;
    }
    PiecewiseControl::new(grid, values)
}

pub type DriftFn = Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>;
pub type CoefficientFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// `v(t,x,u) = v₀(t,x) + Σᵢ φᵢ(t,u) vᵢ(t,x)`.
#[derive(Clone)]
pub struct ControlAffineField {
    pub state_dim: usize,
    pub control_dim: usize,
    pub drift: DriftFn,
    pub terms: Vec<(DriftFn, CoefficientFn)>,
    pub lipschitz: Option<f64>,
    pub growth: Option<f64>,
    pub label: String,
}

impl fmt::Debug for ControlAffineField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineField")
            .field("label", &self.label)
            .field("terms", &self.terms.len())
            .finish()
    }
}

impl ControlAffineField {
    /// `Φ(t,u) = (φ₁(t,u), …, φ_l(t,u))`.
    pub fn phi(&self, t: f64, u: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|(_, phi)| phi(t, u)).collect()
    }

    pub fn to_field(&self) -> ControlledField {
        let n = self.state_dim;
        let drift = self.drift.clone();
        let terms = self.terms.clone();
        let mut field = ControlledField::new(
            self.label.clone(),
            n,
            self.control_dim,
            Arc::new(move |t: f64, x: &[f64], u: &[f64], out: &mut [f64]| {
                drift(t, x, out);
                let mut buf = vec![0.0; n];
                for (vi, phi) in &terms {
                    let c = phi(t, u);
                    if c != 0.0 {
                        vi(t, x, &mut buf);
                        for k in 0..n {
                            out[k] += c * buf[k];
                        }
                    }
                }
            }),
        );
        if let Some(l) = self.lipschitz {
            field = field.with_lipschitz(l);
        }
        if let Some(c) = self.growth {
            field = field.with_growth(c);
        }
        field.with_smoothness(true)
    }
}

/// Extracted usual control with the per-cell residuals `|Φ(t,u) − ψ|`.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub control: PiecewiseControl,
    pub residuals: Vec<f64>,
}

/// Usual control realizing `∫Φ(t,·)dν_t` on every cell midpoint.
pub fn filippov_extract(
    field: &ControlAffineField,
    set: &ControlSet,
    nu: &GeneralizedControl,
    refine_steps: usize,
) -> Result<Extraction> {
    if nu.control_dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: nu.control_dim(),
        });
    }
    let coarse = set.lattice(50);
    let diameter = set.diameter();
    let mut values = Vec::with_capacity(nu.cells.len());
    let mut residuals = Vec::with_capacity(nu.cells.len());
    for (i, atoms) in nu.cells.iter().enumerate() {
        let t = 0.5 * (nu.grid[i] + nu.grid[i + 1]);
        let l = field.terms.len();
        let mut psi = vec![0.0; l];
        for a in atoms {
            for (k, v) in field.phi(t, &a.omega).into_iter().enumerate() {
                psi[k] += a.p * v;
            }
        }
        let miss = |u: &[f64]| {
            let phi = field.phi(t, u);
            let d: Vec<f64> = phi.iter().zip(&psi).map(|(a, b)| a - b).collect();
            norm(&d)
        };
        let mut best = coarse[0].clone();
        let mut best_val = miss(&best);
        for u in &coarse[1..] {
            let v = miss(u);
            if v < best_val {
                best = u.clone();
                best_val = v;
            }
        }
        if !matches!(set, ControlSet::Finite(_)) {
            let mut step = diameter / 50.0;
            for _ in 0..refine_steps {
                if best_val == 0.0 {
                    break;
                }
                let mut improved = false;
                for k in 0..best.len() {
                    for sign in [1.0, -1.0] {
                        let mut cand = best.clone();
                        cand[k] += sign * step;
                        let cand = set.project(&cand);
                        let v = miss(&cand);
                        if v < best_val {
                            best = cand;
                            best_val = v;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
        }
        if best_val > 1e-6 * (1.0 + norm(&psi)) {
            return Err(Error::ConvexityViolation {
                t,
                residual: best_val,
                target: psi,
                best,
            });
        }
        values.push(best);
        residuals.push(best_val);
    }
    Ok(Extraction {
        control: PiecewiseControl::new(nu.grid.clone(), values)?,
        residuals,
    })
}
