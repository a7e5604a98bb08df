//! Backward target tubes, boundary outflow and the necessary-condition
//! residual, plus the directional derivative of `θ ↦ θ(A^τ)` and the
//! symmetric-difference bound for perturbed targets.

use std::sync::Arc;

use crate::controls::{ControlSet, PiecewiseControl};
use crate::error::{Error, Hypothesis, Result};
use crate::flows::{ClosedField, ControlledField};
use crate::geom::{pairwise_sum, unit_ball_volume, BoxRegion};
use crate::measures::{boundary_mesh, AnalyticDensity, BoundaryMesh, Measure, TargetSet, TargetShape};
use crate::quadrature::{integrate_region, QuadratureConfig};
use crate::transport::density_at;

/// Rejects data outside the hypotheses of the necessary condition: a smooth
/// initial density, a target with the interior ball property and a smooth field.
pub fn gate(theta: &Measure, target: &TargetSet, field: &ControlledField) -> Result<()> {
    match theta {
        Measure::Density(d) if d.is_smooth() => {}
        _ => return Err(Error::Hypothesis(Hypothesis::DensitySmoothness)),
    }
    if !(target.inner_ball_radius() > 0.0) {
        return Err(Error::Hypothesis(Hypothesis::InteriorBall));
    }
    if !field.is_smooth() {
        return Err(Error::Hypothesis(Hypothesis::FieldSmoothness));
    }
    Ok(())
}

/// Boundary meshes of `A^τ = V_T^τ(A)` on a grid of times.
#[derive(Debug, Clone)]
pub struct TargetTube {
    taus: Vec<f64>,
    meshes: Vec<BoundaryMesh>,
}

impl TargetTube {
    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn mesh(&self, i: usize) -> &BoundaryMesh {
        &self.meshes[i]
    }

    pub fn meshes(&self) -> &[BoundaryMesh] {
        &self.meshes
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }
}

/// Transports the nodes of `∂A` from `T` back to each `τ`; normals and
/// weights are rebuilt from the moved polylines.
pub fn backward_tube(target: &TargetSet, closed: &ClosedField, taus: &[f64], mesh_h: f64) -> Result<TargetTube> {
    if !(target.inner_ball_radius() > 0.0) {
        return Err(Error::Hypothesis(Hypothesis::InteriorBall));
    }
    let base = boundary_mesh(target, mesh_h)?;
    let horizon = closed.horizon();
    let mut meshes = Vec::with_capacity(taus.len());
    for &tau in taus {
        if tau == horizon {
            meshes.push(base.clone());
            continue;
        }
        let mut nodes = Vec::with_capacity(base.len());
        for x in base.nodes() {
            let y = closed.flow(horizon, tau, x)?;
            nodes.push([y[0], y[1]]);
        }
        let mesh = base.with_nodes(nodes)?;
        if mesh.self_intersects() {
            return Err(Error::MeshDegeneracy { tau });
        }
        meshes.push(mesh);
    }
    Ok(TargetTube {
        taus: taus.to_vec(),
        meshes,
    })
}

/// Transported density `ρ̄(τ, ·)` at the mesh nodes.
pub fn densities_on(mesh: &BoundaryMesh, rho0: &AnalyticDensity, closed: &ClosedField, tau: f64) -> Result<Vec<f64>> {
    mesh.nodes().iter().map(|x| density_at(rho0, closed, tau, x)).collect()
}

/// `Σⱼ ρⱼ (v(τ,xⱼ,ω)·nⱼ) σⱼ`.
pub fn outflow(mesh: &BoundaryMesh, rho: &[f64], field: &ControlledField, tau: f64, omega: &[f64]) -> f64 {
    let mut v = [0.0; 2];
    let terms: Vec<f64> = (0..mesh.len())
        .map(|j| {
            if rho[j] == 0.0 {
                return 0.0;
            }
            let x = mesh.nodes()[j];
            let n = mesh.normals()[j];
            field.eval_into(tau, &x, omega, &mut v);
            rho[j] * (v[0] * n[0] + v[1] * n[1]) * mesh.weights()[j]
        })
        .collect();
    pairwise_sum(&terms)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualConfig {
    /// Node spacing of the boundary mesh of `A`.
    pub mesh_h: f64,
    /// RK4 step.
    pub step: f64,
    /// Pass threshold on the largest residual.
    pub tol: f64,
    /// Refine the minimizer locally when `U` is a box.
    pub refine_box: bool,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        ResidualConfig {
            mesh_h: 0.01,
            step: 1e-2,
            tol: 1e-2,
            refine_box: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub tau: f64,
    pub res: f64,
    pub outflow_ubar: f64,
    pub outflow_min: f64,
    pub argmin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub rows: Vec<ResidualRow>,
    pub max_residual: f64,
    /// `∫ res(τ) dτ` with each sample owning the times closest to it.
    pub integral: f64,
    pub tol: f64,
    pub pass: bool,
    /// Largest transported density seen on the tube nodes.
    pub density_max: f64,
}

fn refine_in_box(
    lo: &[f64],
    hi: &[f64],
    start: Vec<f64>,
    start_val: f64,
    eval: &dyn Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let mut best = start;
    let mut best_val = start_val;
    let mut step: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.25 * (b - a)).collect();
    for _ in 0..12 {
        let mut improved = false;
        for k in 0..best.len() {
            for sign in [1.0, -1.0] {
                let mut cand = best.clone();
                cand[k] = (cand[k] + sign * step[k]).clamp(lo[k], hi[k]);
                let v = eval(&cand);
                if v < best_val {
                    best = cand;
                    best_val = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    (best, best_val)
}

/// Per-τ gap between the outflow under `ū(τ)` and its minimum over `U`.
pub fn optimality_residual(
    theta: &Measure,
    ubar: &PiecewiseControl,
    field: &ControlledField,
    target: &TargetSet,
    set: &ControlSet,
    u_grid: &[Vec<f64>],
    taus: Option<&[f64]>,
    cfg: &ResidualConfig,
) -> Result<ResidualReport> {
    gate(theta, target, field)?;
    let Measure::Density(rho0) = theta else {
        return Err(Error::Hypothesis(Hypothesis::DensitySmoothness));
    };
    if u_grid.is_empty() {
        return Err(Error::InvalidArgument("control grid is empty".into()));
    }
    ubar.check_in(set)?;
    let taus: Vec<f64> = taus.map(|t| t.to_vec()).unwrap_or_else(|| ubar.midpoints());
    let closed = ClosedField::piecewise(field.clone(), ubar, cfg.step)?;
    let tube = backward_tube(target, &closed, &taus, cfg.mesh_h)?;
    let mut rows = Vec::with_capacity(taus.len());
    let mut density_max: f64 = 0.0;
    for (i, &tau) in taus.iter().enumerate() {
        let mesh = tube.mesh(i);
        let rho = densities_on(mesh, rho0, &closed, tau)?;
        density_max = rho.iter().copied().fold(density_max, f64::max);
        let flux = |omega: &[f64]| outflow(mesh, &rho, field, tau, omega);
        let ubar_tau = ubar.value_at(tau)?.to_vec();
        let outflow_ubar = flux(&ubar_tau);
        let mut argmin = u_grid[0].clone();
        let mut outflow_min = flux(&argmin);
        for omega in &u_grid[1..] {
            let v = flux(omega);
            if v < outflow_min {
                outflow_min = v;
                argmin = omega.clone();
            }
        }
        if cfg.refine_box {
            if let ControlSet::Box { lo, hi } = set {
                (argmin, outflow_min) = refine_in_box(lo, hi, argmin, outflow_min, &flux);
            }
        }
        rows.push(ResidualRow {
            tau,
            res: outflow_ubar - outflow_min,
            outflow_ubar,
            outflow_min,
            argmin,
        });
    }
    let horizon = ubar.horizon();
    let owned: Vec<f64> = (0..taus.len())
        .map(|i| {
            let left = if i == 0 { 0.0 } else { 0.5 * (taus[i - 1] + taus[i]) };
            let right = if i + 1 == taus.len() { horizon } else { 0.5 * (taus[i] + taus[i + 1]) };
            rows[i].res * (right - left)
        })
        .collect();
    let max_residual = rows.iter().map(|r| r.res).fold(f64::NEG_INFINITY, f64::max);
    Ok(ResidualReport {
        integral: pairwise_sum(&owned),
        pass: max_residual <= cfg.tol,
        tol: cfg.tol,
        max_residual,
        rows,
        density_max,
    })
}

/// `−Σ (w·n) ρ σ` over the tube mesh at `τ`, with `ρ = ρ̄(τ,·)`.
pub fn directional_derivative(
    rho0: &AnalyticDensity,
    closed: &ClosedField,
    target: &TargetSet,
    tau: f64,
    w: &dyn Fn([f64; 2]) -> [f64; 2],
    mesh_h: f64,
) -> Result<f64> {
    if !rho0.is_smooth() {
        return Err(Error::Hypothesis(Hypothesis::DensitySmoothness));
    }
    let tube = backward_tube(target, closed, &[tau], mesh_h)?;
    let mesh = tube.mesh(0);
    let rho = densities_on(mesh, rho0, closed, tau)?;
    let terms: Vec<f64> = (0..mesh.len())
        .map(|j| {
            let wx = w(mesh.nodes()[j]);
            let n = mesh.normals()[j];
            -(wx[0] * n[0] + wx[1] * n[1]) * rho[j] * mesh.weights()[j]
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Diffeomorphism with its inverse and a common bound `b` on both Lipschitz constants.
#[derive(Clone)]
pub struct Diffeo {
    pub forward: MapFn,
    pub inverse: MapFn,
    pub lip: f64,
}

impl Diffeo {
    pub fn identity() -> Self {
        Diffeo {
            forward: Arc::new(|x: &[f64]| x.to_vec()),
            inverse: Arc::new(|x: &[f64]| x.to_vec()),
            lip: 1.0,
        }
    }

    /// `x ↦ Bx + c` in the plane, `B` row-major.
    pub fn affine(b: [f64; 4], c: [f64; 2]) -> Result<Self> {
        let det = b[0] * b[3] - b[1] * b[2];
        if !(det.abs() > 1e-12) {
            return Err(Error::SingularJacobian { det });
        }
        let inv = [b[3] / det, -b[1] / det, -b[2] / det, b[0] / det];
        let norm2 = |m: &[f64; 4]| nalgebra::Matrix2::new(m[0], m[1], m[2], m[3]).singular_values().max();
        let lip = norm2(&b).max(norm2(&inv));
        Ok(Diffeo {
            forward: Arc::new(move |x: &[f64]| vec![b[0] * x[0] + b[1] * x[1] + c[0], b[2] * x[0] + b[3] * x[1] + c[1]]),
            inverse: Arc::new(move |y: &[f64]| {
                let z = [y[0] - c[0], y[1] - c[1]];
                vec![inv[0] * z[0] + inv[1] * z[1], inv[2] * z[0] + inv[3] * z[1]]
            }),
            lip,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MainboundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Sampled `max ρ` on `φ₁(A) △ φ₂(A)`.
    pub density_max: f64,
    /// Sampled `sup_{x∈A} |φ₁(x) − φ₂(x)|`.
    pub displacement: f64,
    pub pass: bool,
}

/// `|θ(φ₁A) − θ(φ₂A)|` against `M nαₙ (diam A)ⁿ b^{n+1} sup|φ₁−φ₂| / (2^{n−1} r)`.
pub fn mainbound_check(
    theta: &AnalyticDensity,
    target: &TargetSet,
    phi1: &Diffeo,
    phi2: &Diffeo,
    cfg: &QuadratureConfig,
) -> Result<MainboundReport> {
    if !matches!(target.shape(), TargetShape::BallUnion(_)) {
        return Err(Error::InvalidArgument("the bound needs a union of balls".into()));
    }
    let n = target.dim();
    if theta.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: theta.dim() });
    }
    let b = phi1.lip.max(phi2.lip);
    let mass = |phi: &Diffeo| -> Result<f64> {
        let level = |x: &[f64]| -> Result<f64> { Ok(target.signed_distance(&(phi.inverse)(x))) };
        Ok(integrate_region(theta, theta.support(), &level, phi.lip, cfg)?.value)
    };
    let lhs = (mass(phi1)? - mass(phi2)?).abs();

    // sup over A of |φ₁ − φ₂| on a lattice of A's bounding box
    let bbox = target.bounding_box();
    let per_axis = if n <= 2 { 101 } else { 21 };
    let mut displacement: f64 = 0.0;
    for x in lattice(&bbox, per_axis) {
        if target.contains(&x) {
            displacement = displacement.max(crate::geom::dist(&(phi1.forward)(&x), &(phi2.forward)(&x)));
        }
    }

    // max ρ on the symmetric difference, sampled over the union's bounding box
    let images: Vec<Vec<f64>> = lattice(&bbox, per_axis)
        .flat_map(|x| [(phi1.forward)(&x), (phi2.forward)(&x)])
        .collect();
    let region = BoxRegion::bounding(images.iter().map(|p| &p[..]))
        .expect("lattice is nonempty")
        .inflate(b * bbox.max_width() / per_axis as f64);
    let inside = |phi: &Diffeo, y: &[f64]| target.contains(&(phi.inverse)(y));
    let mut density_max: f64 = 0.0;
    let mut union_max: f64 = 0.0;
    for y in lattice(&region, 2 * per_axis) {
        let (a, c) = (inside(phi1, &y), inside(phi2, &y));
        if a || c {
            let r = theta.eval(&y);
            union_max = union_max.max(r);
            if a != c {
                density_max = density_max.max(r);
            }
        }
    }
    if density_max == 0.0 && lhs > 0.0 {
        // the difference is thinner than the sampling lattice
        density_max = union_max;
    }

    let diam = target.diameter();
    let r = target.inner_ball_radius();
    let shape = n as f64 * unit_ball_volume(n) * diam.powi(n as i32) / (2f64.powi(n as i32 - 1) * r);
    let rhs = density_max * shape * b.powi(n as i32 + 1) * displacement;
    Ok(MainboundReport {
        lhs,
        rhs,
        density_max,
        displacement,
        pass: lhs <= rhs * (1.0 + 1e-3),
    })
}

fn lattice(region: &BoxRegion, per_axis: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    let n = region.dim();
    let total = per_axis.pow(n as u32);
    (0..total).map(move |mut code| {
        (0..n)
            .map(|k| {
                let i = code % per_axis;
                code /= per_axis;
                region.lo[k] + (region.hi[k] - region.lo[k]) * i as f64 / (per_axis - 1) as f64
            })
            .collect()
    })
}

/// Right side of the perimeter bound `σ(∂A) ≤ nαₙ(diam A)ⁿ/(2ⁿ r)`.
pub fn perimeter_bound(target: &TargetSet) -> f64 {
    let n = target.dim();
    n as f64 * unit_ball_volume(n) * target.diameter().powi(n as i32) / (2f64.powi(n as i32) * target.inner_ball_radius())
}

/// Standard candidate grid: 64 directions for planar balls.
pub fn default_u_grid(set: &ControlSet) -> Vec<Vec<f64>> {
    set.grid(64)
}
