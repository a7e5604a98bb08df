//! Controlled vector fields, their flows `V_t^s` and flow Jacobians.
//!
//! Flows use classic RK4 with a fixed step. The interval `[t, s]` is split at
//! the control breakpoints; on each piece the control is constant (chosen at
//! the piece midpoint) and the piece is covered by `⌈len/h⌉` equal steps.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controls::{GeneralizedControl, PiecewiseControl};
use crate::error::{Error, Result};
use crate::geom::{dist, norm, BoxRegion};

/// States whose norm exceeds this are reported as escaped.
pub const OVERFLOW_GUARD: f64 = 1e12;

pub type FieldFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// Writes `D_x v(t,x,u)` row-major into the output slice.
pub type JacobianFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// `v(t, x, u)` with optional analytic `D_x v` and declared constants.
#[derive(Clone)]
pub struct ControlledField {
    state_dim: usize,
    control_dim: usize,
    eval: FieldFn,
    jacobian: Option<JacobianFn>,
    lipschitz: Option<f64>,
    growth: Option<f64>,
    smooth: bool,
    label: String,
}

impl fmt::Debug for ControlledField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlledField")
            .field("label", &self.label)
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("lipschitz", &self.lipschitz)
            .field("smooth", &self.smooth)
            .finish()
    }
}

impl ControlledField {
    pub fn new(label: impl Into<String>, state_dim: usize, control_dim: usize, eval: FieldFn) -> Self {
        ControlledField {
            state_dim,
            control_dim,
            eval,
            jacobian: None,
            lipschitz: None,
            growth: None,
            smooth: false,
            label: label.into(),
        }
    }

    pub fn with_jacobian(mut self, jacobian: JacobianFn) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_growth(mut self, c: f64) -> Self {
        self.growth = Some(c);
        self
    }

    pub fn with_smoothness(mut self, smooth: bool) -> Self {
        self.smooth = smooth;
        self
    }

    /// `v = u` on `ℝⁿ` with `U ⊂ ℝⁿ`.
    pub fn translation(n: usize) -> Self {
        ControlledField::new(
            "translation",
            n,
            n,
            Arc::new(|_, _, u, out| out.copy_from_slice(u)),
        )
        .with_jacobian(Arc::new(|_, _, _, out| out.fill(0.0)))
        .with_lipschitz(0.0)
        .with_growth(1.0)
        .with_smoothness(true)
    }

    /// `v = A x + B u` with row-major `A` (n×n) and `B` (n×m).
    pub fn linear(n: usize, m: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != n * n || b.len() != n * m {
            return Err(Error::InvalidArgument("linear field needs n×n and n×m matrices".into()));
        }
        let op = nalgebra::DMatrix::from_row_slice(n, n, &a);
        let l = op.singular_values().max();
        let bnorm = nalgebra::DMatrix::from_row_slice(n, m.max(1), &if m == 0 { vec![0.0; n] } else { b.clone() })
            .singular_values()
            .max();
        let a2 = a.clone();
        Ok(ControlledField::new(
            "linear",
            n,
            m,
            Arc::new(move |_, x, u, out| {
                for i in 0..n {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += a[i * n + j] * x[j];
                    }
                    for j in 0..m {
                        s += b[i * m + j] * u[j];
                    }
                    out[i] = s;
                }
            }),
        )
        .with_jacobian(Arc::new(move |_, _, _, out| out.copy_from_slice(&a2)))
        .with_lipschitz(l)
        .with_growth(l.max(bnorm))
        .with_smoothness(true))
    }

    /// Rotation `v = (−x₂, x₁)` with an inert scalar control.
    pub fn rotation() -> Self {
        let mut f = Self::linear(2, 1, vec![0.0, -1.0, 1.0, 0.0], vec![0.0, 0.0]).expect("fixed sizes");
        f.label = "rotation".into();
        f
    }

    /// Dilation `v = x` with an inert scalar control.
    pub fn dilation(n: usize) -> Self {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        let mut f = Self::linear(n, 1, a, vec![0.0; n]).expect("consistent sizes");
        f.label = "dilation".into();
        f
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn declared_lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn declared_growth(&self) -> Option<f64> {
        self.growth
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.eval)(t, x, u, out)
    }

    pub fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim];
        (self.eval)(t, x, u, &mut out);
        out
    }

    /// `D_x v` row-major; central differences with step `1e−5(1+|x|)` when no
    /// analytic Jacobian is attached.
    pub fn jacobian_into(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        if let Some(j) = &self.jacobian {
            j(t, x, u, out);
            return;
        }
        let n = self.state_dim;
        let step = 1e-5 * (1.0 + norm(x));
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            xp[j] = x[j] + step;
            (self.eval)(t, &xp, u, &mut fp);
            xp[j] = x[j] - step;
            (self.eval)(t, &xp, u, &mut fm);
            xp[j] = x[j];
            for i in 0..n {
                out[i * n + j] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
    }

    pub fn jacobian(&self, t: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim * self.state_dim];
        self.jacobian_into(t, x, u, &mut out);
        out
    }
}

/// Where the closed field takes its control from.
#[derive(Debug, Clone)]
pub enum ControlSource {
    Fixed(Vec<f64>),
    Piecewise(PiecewiseControl),
    Averaged(GeneralizedControl),
}

impl ControlSource {
    fn grid(&self, horizon: f64) -> Vec<f64> {
        match self {
            ControlSource::Fixed(_) => vec![0.0, horizon],
            ControlSource::Piecewise(u) => u.grid().to_vec(),
            ControlSource::Averaged(nu) => nu.grid().to_vec(),
        }
    }
}

/// `(t, x) ↦ v(t, x, u(t))` for a given control source and RK4 step.
#[derive(Debug, Clone)]
pub struct ClosedField {
    field: ControlledField,
    source: ControlSource,
    step: f64,
    horizon: f64,
    breakpoints: Vec<f64>,
}

impl ClosedField {
    pub fn new(field: ControlledField, source: ControlSource, step: f64, horizon: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidArgument(format!("integrator step must be positive, got {step}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        let m = match &source {
            ControlSource::Fixed(u) => u.len(),
            ControlSource::Piecewise(u) => u.control_dim(),
            ControlSource::Averaged(nu) => nu.control_dim(),
        };
        if m != field.control_dim {
            return Err(Error::DimensionMismatch {
                expected: field.control_dim,
                got: m,
            });
        }
        let breakpoints = source.grid(horizon);
        let end = *breakpoints.last().expect("grid has endpoints");
        if (end - horizon).abs() > 1e-12 * horizon {
            return Err(Error::InvalidArgument(format!(
                "control covers [0, {end}] but the horizon is {horizon}"
            )));
        }
        Ok(ClosedField {
            field,
            source,
            step,
            horizon,
            breakpoints,
        })
    }

    pub fn fixed(field: ControlledField, u: &[f64], step: f64, horizon: f64) -> Result<Self> {
        Self::new(field, ControlSource::Fixed(u.to_vec()), step, horizon)
    }

    pub fn piecewise(field: ControlledField, u: &PiecewiseControl, step: f64) -> Result<Self> {
        let horizon = u.horizon();
        Self::new(field, ControlSource::Piecewise(u.clone()), step, horizon)
    }

    pub fn field(&self) -> &ControlledField {
        &self.field
    }

    pub fn source(&self) -> &ControlSource {
        &self.source
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.field.state_dim
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.horizon;
        if t >= -slack && t <= self.horizon + slack {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange { t, horizon: self.horizon })
        }
    }

    fn cell(&self, t: f64) -> usize {
        let k = self.breakpoints.partition_point(|&g| g <= t);
        k.clamp(1, self.breakpoints.len() - 1) - 1
    }

    fn velocity_in_cell(&self, cell: usize, t: f64, x: &[f64], out: &mut [f64], buf: &mut [f64]) {
        match &self.source {
            ControlSource::Fixed(u) => self.field.eval_into(t, x, u, out),
            ControlSource::Piecewise(u) => self.field.eval_into(t, x, &u.values()[cell], out),
            ControlSource::Averaged(nu) => {
                out.fill(0.0);
                for atom in &nu.cells()[cell] {
                    self.field.eval_into(t, x, &atom.omega, buf);
                    for (o, b) in out.iter_mut().zip(buf.iter()) {
                        *o += atom.p * b;
                    }
                }
            }
        }
    }

    fn jacobian_in_cell(&self, cell: usize, t: f64, x: &[f64], out: &mut [f64], buf: &mut [f64]) {
        match &self.source {
            ControlSource::Fixed(u) => self.field.jacobian_into(t, x, u, out),
            ControlSource::Piecewise(u) => self.field.jacobian_into(t, x, &u.values()[cell], out),
            ControlSource::Averaged(nu) => {
                out.fill(0.0);
                for atom in &nu.cells()[cell] {
                    self.field.jacobian_into(t, x, &atom.omega, buf);
                    for (o, b) in out.iter_mut().zip(buf.iter()) {
                        *o += atom.p * b;
                    }
                }
            }
        }
    }

    /// Control value in force at `t` (the averaged field has none).
    pub fn control_at(&self, t: f64) -> Result<Option<Vec<f64>>> {
        self.check_time(t)?;
        Ok(match &self.source {
            ControlSource::Fixed(u) => Some(u.clone()),
            ControlSource::Piecewise(u) => Some(u.values()[self.cell(t)].clone()),
            ControlSource::Averaged(_) => None,
        })
    }

    /// `v̄(t, x)`; at a breakpoint the cell starting there is used.
    pub fn velocity(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let n = self.dim();
        let mut out = vec![0.0; n];
        let mut buf = vec![0.0; n];
        self.velocity_in_cell(self.cell(t), t, x, &mut out, &mut buf);
        Ok(out)
    }

    /// Pieces of `[t, s]` between breakpoints, in the direction of travel.
    fn segments(&self, t: f64, s: f64) -> Vec<(f64, f64)> {
        let (lo, hi) = if t <= s { (t, s) } else { (s, t) };
        let mut cuts = vec![lo];
        cuts.extend(self.breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
        cuts.push(hi);
        let mut segs: Vec<(f64, f64)> = cuts.windows(2).map(|w| (w[0], w[1])).collect();
        if s < t {
            segs.reverse();
            for seg in &mut segs {
                *seg = (seg.1, seg.0);
            }
        }
        segs
    }

    /// `V_t^s(x)`.
    pub fn flow(&self, t: f64, s: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = x.to_vec();
        self.flow_in_place(t, s, &mut y)?;
        Ok(y)
    }

    pub fn flow_in_place(&self, t: f64, s: f64, y: &mut [f64]) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: y.len() });
        }
        self.check_time(t)?;
        self.check_time(s)?;
        if t == s {
            return Ok(());
        }
        let n = self.dim();
        let mut work = vec![0.0; 6 * n];
        let (k1, rest) = work.split_at_mut(n);
        let (k2, rest) = rest.split_at_mut(n);
        let (k3, rest) = rest.split_at_mut(n);
        let (k4, rest) = rest.split_at_mut(n);
        let (tmp, buf) = rest.split_at_mut(n);
        for (a, b) in self.segments(t, s) {
            let cell = self.cell(0.5 * (a + b));
            let steps = ((b - a).abs() / self.step - 1e-9).ceil().max(1.0) as usize;
            let h = (b - a) / steps as f64;
            for i in 0..steps {
                let tc = a + h * i as f64;
                self.velocity_in_cell(cell, tc, y, k1, buf);
                for k in 0..n {
                    tmp[k] = y[k] + 0.5 * h * k1[k];
                }
                self.velocity_in_cell(cell, tc + 0.5 * h, tmp, k2, buf);
                for k in 0..n {
                    tmp[k] = y[k] + 0.5 * h * k2[k];
                }
                self.velocity_in_cell(cell, tc + 0.5 * h, tmp, k3, buf);
                for k in 0..n {
                    tmp[k] = y[k] + h * k3[k];
                }
                self.velocity_in_cell(cell, tc + h, tmp, k4, buf);
                for k in 0..n {
                    y[k] += h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
                }
                let r = norm(y);
                if !(r <= OVERFLOW_GUARD) {
                    return Err(Error::Overflow { time: tc + h });
                }
            }
        }
        Ok(())
    }

    /// `(V_t^s(x), DV_t^s(x))`, the Jacobian row-major, from the variational
    /// equation `Ṁ = D_x v · M`, `M(t) = I`, integrated with the same steps.
    pub fn flow_jacobian(&self, t: f64, s: f64, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len() });
        }
        self.check_time(t)?;
        self.check_time(s)?;
        let mut y = x.to_vec();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        if t == s {
            return Ok((y, m));
        }
        let nn = n * n;
        let mut ks = vec![vec![0.0; n]; 4];
        let mut kms = vec![vec![0.0; nn]; 4];
        let mut tmp = vec![0.0; n];
        let mut tmpm = vec![0.0; nn];
        let mut jac = vec![0.0; nn];
        let mut buf = vec![0.0; n];
        let mut bufm = vec![0.0; nn];
        let matmul = |a: &[f64], b: &[f64], out: &mut [f64]| {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += a[i * n + k] * b[k * n + j];
                    }
                    out[i * n + j] = s;
                }
            }
        };
        for (a, b) in self.segments(t, s) {
            let cell = self.cell(0.5 * (a + b));
            let steps = ((b - a).abs() / self.step - 1e-9).ceil().max(1.0) as usize;
            let h = (b - a) / steps as f64;
            for i in 0..steps {
                let tc = a + h * i as f64;
                for stage in 0..4 {
                    let (ts, c) = match stage {
                        0 => (tc, 0.0),
                        1 | 2 => (tc + 0.5 * h, 0.5 * h),
                        _ => (tc + h, h),
                    };
                    if stage == 0 {
                        tmp.copy_from_slice(&y);
                        tmpm.copy_from_slice(&m);
                    } else {
                        for k in 0..n {
                            tmp[k] = y[k] + c * ks[stage - 1][k];
                        }
                        for k in 0..nn {
                            tmpm[k] = m[k] + c * kms[stage - 1][k];
                        }
                    }
                    self.velocity_in_cell(cell, ts, &tmp, &mut ks[stage], &mut buf);
                    self.jacobian_in_cell(cell, ts, &tmp, &mut jac, &mut bufm);
                    matmul(&jac, &tmpm, &mut kms[stage]);
                }
                for k in 0..n {
                    y[k] += h / 6.0 * (ks[0][k] + 2.0 * ks[1][k] + 2.0 * ks[2][k] + ks[3][k]);
                }
                for k in 0..nn {
                    m[k] += h / 6.0 * (kms[0][k] + 2.0 * kms[1][k] + 2.0 * kms[2][k] + kms[3][k]);
                }
                if !(norm(&y) <= OVERFLOW_GUARD) || m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Overflow { time: tc + h });
                }
            }
        }
        Ok((y, m))
    }
}

/// Determinant of a row-major square matrix.
pub fn determinant(n: usize, m: &[f64]) -> f64 {
    match n {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        _ => nalgebra::DMatrix::from_row_slice(n, n, m).determinant(),
    }
}

/// Sampled constants of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEstimate {
    pub lipschitz: f64,
    pub growth: f64,
    pub pairs: usize,
    pub points: usize,
}

/// Largest sampled difference quotient `|v(x)−v(x′)|/|x−x′|` and growth
/// ratio `|v(x)|/(1+|x|)` over a lattice of the domain box.
pub fn estimate_constants(
    field: &ControlledField,
    domain: &BoxRegion,
    t_samples: &[f64],
    u_samples: &[Vec<f64>],
) -> Result<ConstantEstimate> {
    if t_samples.is_empty() || u_samples.is_empty() {
        return Err(Error::InvalidArgument("constant estimation needs sample times and controls".into()));
    }
    let n = field.state_dim;
    if domain.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: domain.dim() });
    }
    let per_axis = ((400f64).powf(1.0 / n as f64).floor() as usize).max(2);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    'outer: loop {
        points.push(
            (0..n)
                .map(|k| domain.lo[k] + (domain.hi[k] - domain.lo[k]) * idx[k] as f64 / (per_axis - 1) as f64)
                .collect(),
        );
        for k in 0..n {
            idx[k] += 1;
            if idx[k] < per_axis {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    let mut lipschitz: f64 = 0.0;
    let mut growth: f64 = 0.0;
    let mut pairs = 0;
    for &t in t_samples {
        for u in u_samples {
            let values: Vec<Vec<f64>> = points.iter().map(|x| field.eval(t, x, u)).collect();
            for (x, v) in points.iter().zip(&values) {
                growth = growth.max(norm(v) / (1.0 + norm(x)));
            }
            for i in 0..points.len() {
                for j in i + 1..points.len() {
                    let d = dist(&points[i], &points[j]);
                    if d > 0.0 {
                        lipschitz = lipschitz.max(dist(&values[i], &values[j]) / d);
                        pairs += 1;
                    }
                }
            }
        }
    }
    Ok(ConstantEstimate {
        lipschitz,
        growth,
        pairs,
        points: points.len() * t_samples.len() * u_samples.len(),
    })
}

/// Declared Lipschitz constant, or the sampled estimate when none is declared.
pub fn effective_lipschitz(field: &ControlledField, domain: &BoxRegion, horizon: f64, u_samples: &[Vec<f64>]) -> Result<(f64, bool)> {
    if let Some(l) = field.lipschitz {
        return Ok((l, true));
    }
    let ts: Vec<f64> = (0..5).map(|i| horizon * i as f64 / 4.0).collect();
    Ok((estimate_constants(field, domain, &ts, u_samples)?.lipschitz, false))
}

/// Random point pairs in a box, reproducible from the seed.
pub fn sample_pairs(domain: &BoxRegion, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        domain.lo.iter().zip(&domain.hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect()
    };
    (0..count).map(|_| (draw(&mut rng), draw(&mut rng))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_field_is_exact() {
        let f = ClosedField::fixed(ControlledField::translation(2), &[1.0, 0.0], 1.0 / 64.0, 1.0).unwrap();
        assert_eq!(f.flow(0.0, 1.0, &[-2.0, 0.0]).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(f.flow(0.5, 0.5, &[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn rotation_full_turn() {
        let f = ClosedField::fixed(ControlledField::rotation(), &[0.0], 1e-3, 2.0 * PI).unwrap();
        let y = f.flow(0.0, 2.0 * PI, &[1.0, 0.5]).unwrap();
        assert!(dist(&y, &[1.0, 0.5]) < 1e-8);
        let (_, m) = f.flow_jacobian(0.0, PI / 2.0, &[0.3, 0.2]).unwrap();
        assert!((m[0]).abs() < 1e-9 && (m[1] + 1.0).abs() < 1e-9 && (m[2] - 1.0).abs() < 1e-9);
        assert!((determinant(2, &m) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dilation_determinant() {
        let f = ClosedField::fixed(ControlledField::dilation(2), &[0.0], 1e-3, 1.0).unwrap();
        let (y, m) = f.flow_jacobian(0.0, 1.0, &[0.5, -0.25]).unwrap();
        let e = 1f64.exp();
        assert!((y[0] - 0.5 * e).abs() < 1e-9);
        assert!((determinant(2, &m) - e * e).abs() < 1e-6);
    }

    #[test]
    fn fd_jacobian_matches_analytic() {
        let analytic = ControlledField::linear(2, 1, vec![0.2, -1.0, 0.7, 0.1], vec![1.0, 0.0]).unwrap();
        let eval = analytic.eval.clone();
        let plain = ControlledField::new("plain", 2, 1, eval);
        let a = analytic.jacobian(0.0, &[0.3, 0.4], &[0.5]);
        let b = plain.jacobian(0.0, &[0.3, 0.4], &[0.5]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn breakpoints_are_respected() {
        let u = PiecewiseControl::uniform(1.0, vec![vec![1.0], vec![-1.0], vec![2.0]]).unwrap();
        let f = ClosedField::piecewise(ControlledField::translation(1), &u, 0.1).unwrap();
        let y = f.flow(0.0, 1.0, &[0.0]).unwrap();
        assert!((y[0] - 2.0 / 3.0).abs() < 1e-14);
        let back = f.flow(1.0, 0.0, &y).unwrap();
        assert!(back[0].abs() < 1e-14);
    }

    #[test]
    fn constants_of_linear_fields() {
        let domain = BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0]);
        let us = vec![vec![0.0], vec![1.0]];
        let rot = estimate_constants(&ControlledField::rotation(), &domain, &[0.0], &us).unwrap();
        assert!((rot.lipschitz - 1.0).abs() < 1e-6);
        let three = ControlledField::linear(2, 1, vec![3.0, 0.0, 0.0, 3.0], vec![1.0, 1.0]).unwrap();
        let c = estimate_constants(&three, &domain, &[0.0], &us).unwrap();
        assert!((c.lipschitz - 3.0).abs() < 1e-6);
        let tr = estimate_constants(&ControlledField::translation(2), &domain, &[0.0], &[vec![1.0, 0.0]]).unwrap();
        assert_eq!(tr.lipschitz, 0.0);
    }

    #[test]
    fn overflow_is_reported() {
        let mut a = vec![0.0; 4];
        a[0] = 40.0;
        a[3] = 40.0;
        let f = ClosedField::fixed(ControlledField::linear(2, 1, a, vec![0.0, 0.0]).unwrap(), &[0.0], 1e-2, 1.0).unwrap();
        assert!(matches!(f.flow(0.0, 1.0, &[1.0, 1.0]), Err(Error::Overflow { .. })));
    }
}
