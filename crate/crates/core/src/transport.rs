//! Solutions of the continuity equation along characteristics and the
//! terminal-mass objective.

use crate::controls::{GeneralizedControl, PiecewiseControl};
use crate::error::{Error, Hypothesis, Result};
use crate::flows::{determinant, ClosedField, ControlSource, ControlledField};
use crate::measures::{mass_in_particles, AnalyticDensity, Measure, ParticleMeasure, TargetSet};
use crate::quadrature::{integrate_region, QuadratureConfig};

/// Determinants at or below this are treated as singular.
pub const SINGULAR_DET: f64 = 1e-14;

/// Particle snapshots `μ(tᵢ) = μ(0) ∘ (V_0^{tᵢ})⁻¹`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    snapshots: Vec<ParticleMeasure>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[ParticleMeasure] {
        &self.snapshots
    }

    pub fn at(&self, i: usize) -> &ParticleMeasure {
        &self.snapshots[i]
    }

    pub fn terminal(&self) -> &ParticleMeasure {
        self.snapshots.last().expect("trajectory has snapshots")
    }
}

/// Moves every particle by `V_0^{tᵢ}` for each requested time.
pub fn solve_particles(theta: &ParticleMeasure, field: &ClosedField, times: &[f64]) -> Result<Trajectory> {
    if theta.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: theta.dim(),
        });
    }
    let mut snapshots = Vec::with_capacity(times.len());
    for &t in times {
        snapshots.push(push_particles(theta, field, 0.0, t)?);
    }
    Ok(Trajectory {
        times: times.to_vec(),
        snapshots,
    })
}

/// `θ ∘ (V_t^s)⁻¹` for a particle measure.
pub fn push_particles(theta: &ParticleMeasure, field: &ClosedField, t: f64, s: f64) -> Result<ParticleMeasure> {
    let mut points = theta.flat_points().to_vec();
    for chunk in points.chunks_mut(theta.dim()) {
        field.flow_in_place(t, s, chunk)?;
    }
    theta.with_points(points)
}

/// `ρ(t,x) = ρ₀(y) / det DV_0^t(y)` with `y = V_t^0(x)`.
pub fn density_at(rho0: &AnalyticDensity, field: &ClosedField, t: f64, x: &[f64]) -> Result<f64> {
    if !field.field().is_smooth() {
        return Err(Error::Hypothesis(Hypothesis::FieldSmoothness));
    }
    if x.len() != rho0.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho0.dim(),
            got: x.len(),
        });
    }
    let y = field.flow(t, 0.0, x)?;
    let r = rho0.eval(&y);
    if r == 0.0 {
        return Ok(0.0);
    }
    let (_, m) = field.flow_jacobian(0.0, t, &y)?;
    let det = determinant(x.len(), &m);
    if !(det > SINGULAR_DET) {
        return Err(Error::SingularJacobian { det });
    }
    Ok(r / det)
}

/// Objective value with its numerical error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    pub error: f64,
}

/// Bound on `Lip(V_0^T)` used to classify quadrature cells.
pub fn flow_lipschitz_bound(field: &ClosedField) -> Result<f64> {
    let l = field
        .field()
        .declared_lipschitz()
        .ok_or_else(|| Error::InvalidArgument(format!("field '{}' has no Lipschitz constant", field.field().label())))?;
    Ok((l * field.horizon()).exp() * 1.01)
}

/// `μ(T)(A)` for the measure transported by a closed field.
///
/// Densities are integrated in the initial configuration: by the change of
/// variables, `μ(T)(A) = ∫ ρ₀(y) 1[V_0^T(y) ∈ A] dy`, and the indicator's
/// level function `y ↦ sdf_A(V_0^T y)` is Lipschitz with constant
/// `Lip(V_0^T)`, which lets whole cells be classified from their centers.
pub fn terminal_mass(
    theta: &Measure,
    field: &ClosedField,
    target: &TargetSet,
    cfg: &QuadratureConfig,
) -> Result<ObjectiveValue> {
    if theta.dim() != field.dim() || target.dim() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: if theta.dim() != field.dim() { theta.dim() } else { target.dim() },
        });
    }
    let horizon = field.horizon();
    match theta {
        Measure::Particles(p) => {
            let terminal = push_particles(p, field, 0.0, horizon)?;
            Ok(ObjectiveValue {
                value: mass_in_particles(&terminal, target)?,
                error: 0.0,
            })
        }
        Measure::Density(d) => {
            let lip = flow_lipschitz_bound(field)?;
            let level = |y: &[f64]| -> Result<f64> {
                let x = field.flow(0.0, horizon, y)?;
                Ok(target.signed_distance(&x))
            };
            let est = integrate_region(d, d.support(), &level, lip, cfg)?;
            Ok(ObjectiveValue {
                value: est.value,
                error: est.error,
            })
        }
    }
}

/// Usual or generalized control.
#[derive(Debug, Clone, Copy)]
pub enum ControlRef<'a> {
    Usual(&'a PiecewiseControl),
    Generalized(&'a GeneralizedControl),
}

/// `μ(T)(A)` under a control; generalized controls act through the averaged field.
pub fn objective(
    theta: &Measure,
    control: ControlRef<'_>,
    field: &ControlledField,
    target: &TargetSet,
    step: f64,
    cfg: &QuadratureConfig,
) -> Result<ObjectiveValue> {
    let closed = match control {
        ControlRef::Usual(u) => ClosedField::new(field.clone(), ControlSource::Piecewise(u.clone()), step, u.horizon())?,
        ControlRef::Generalized(nu) => crate::controls::averaged_field(field, nu, step)?,
    };
    terminal_mass(theta, &closed, target, cfg)
}
