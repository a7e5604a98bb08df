//! Probability measures on ℝⁿ and the sets they are measured on.

mod boundary;
mod density;
mod kdtree;
mod particles;
mod prohorov;
mod target;

pub use boundary::{boundary_mesh, BoundaryMesh, BoundaryPiece};
pub use density::{mollifier_constant, mollify, standard_mollifier, AnalyticDensity, DensityFn};
pub use particles::{pushforward, ParticleMeasure};
pub use prohorov::{prohorov_grid, prohorov_upper};
pub use target::{neighborhood, Ball, ImplicitSet, SdfFn, TargetSet, TargetShape, BOUNDARY_TOL};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_region, QuadratureConfig, QuadratureEstimate};

/// Initial or transported measure in either representation.
#[derive(Clone)]
pub enum Measure {
    Particles(ParticleMeasure),
    Density(AnalyticDensity),
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Particles(p) => p.dim(),
            Measure::Density(d) => d.dim(),
        }
    }
}

impl From<ParticleMeasure> for Measure {
    fn from(p: ParticleMeasure) -> Self {
        Measure::Particles(p)
    }
}

impl From<AnalyticDensity> for Measure {
    fn from(d: AnalyticDensity) -> Self {
        Measure::Density(d)
    }
}

/// Mass of a particle measure inside a closed target set.
pub fn mass_in_particles(measure: &ParticleMeasure, set: &TargetSet) -> Result<f64> {
    check_dim(set.dim(), measure.dim())?;
    let inside: Vec<f64> = (0..measure.len())
        .filter(|&i| set.contains(measure.point(i)))
        .map(|i| measure.weight(i))
        .collect();
    Ok(crate::geom::pairwise_sum(&inside))
}

/// Mass of an analytic density inside a set, by adaptive quadrature.
pub fn mass_in_density(
    density: &AnalyticDensity,
    set: &TargetSet,
    cfg: &QuadratureConfig,
) -> Result<QuadratureEstimate> {
    check_dim(set.dim(), density.dim())?;
    let region = match density.support().intersect(&set.bounding_box()) {
        Some(b) => b,
        None => return Ok(QuadratureEstimate::zero()),
    };
    let level = |x: &[f64]| -> Result<f64> { Ok(set.signed_distance(x)) };
    integrate_region(density, &region, &level, 1.0, cfg)
}

/// `μ(A)` for either representation; densities use the default quadrature.
pub fn mass_in(measure: &Measure, set: &TargetSet) -> Result<f64> {
    match measure {
        Measure::Particles(p) => mass_in_particles(p, set),
        Measure::Density(d) => Ok(mass_in_density(d, set, &QuadratureConfig::default())?.value),
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
