use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{pairwise_sum, BoxRegion};

/// Weighted point cloud `Σ wᵢ δ_{xᵢ}` with unit total weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleMeasure {
    pub const WEIGHT_TOL: f64 = 1e-12;

    /// Builds a measure from row-major points (`N × dim`) and weights.
    pub fn from_flat(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidArgument("particle measure needs at least one point".into()));
        }
        if points.len() != dim * weights.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * weights.len(),
                got: points.len(),
            });
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i / dim });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > Self::WEIGHT_TOL {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(ParticleMeasure { dim, points, weights })
    }

    pub fn new(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
        Self::from_flat(dim, points.concat(), weights)
    }

    /// Equal weights `1/N`.
    pub fn uniform(points: &[Vec<f64>]) -> Result<Self> {
        let n = points.len().max(1);
        Self::new(points, vec![1.0 / n as f64; points.len()])
    }

    pub fn dirac(x: &[f64]) -> Self {
        ParticleMeasure {
            dim: x.len(),
            points: x.to_vec(),
            weights: vec![1.0],
        }
    }

    /// `n` points drawn uniformly from a box, equal weights.
    pub fn sample_box<R: Rng>(region: &BoxRegion, n: usize, rng: &mut R) -> Self {
        let dim = region.dim();
        let mut points = Vec::with_capacity(n * dim);
        for _ in 0..n {
            for k in 0..dim {
                points.push(rng.gen_range(region.lo[k]..=region.hi[k]));
            }
        }
        ParticleMeasure {
            dim,
            points,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn flat_points(&self) -> &[f64] {
        &self.points
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    pub fn bounding_box(&self) -> BoxRegion {
        BoxRegion::bounding(self.points()).expect("nonempty measure")
    }

    /// `∫ φ dθ`.
    pub fn integrate(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = self
            .points()
            .zip(&self.weights)
            .map(|(p, w)| w * phi(p))
            .collect();
        pairwise_sum(&terms)
    }

    /// Same weights, new positions. Positions must be finite.
    pub fn with_points(&self, points: Vec<f64>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: points.len(),
            });
        }
        if let Some(i) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i / self.dim });
        }
        Ok(ParticleMeasure {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
        })
    }
}

/// Image measure `θ∘f⁻¹`: points mapped, weights unchanged.
pub fn pushforward(
    measure: &ParticleMeasure,
    map: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<ParticleMeasure> {
    let mut out = Vec::with_capacity(measure.points.len());
    let mut out_dim = None;
    for (i, p) in measure.points().enumerate() {
        let y = map(p);
        match out_dim {
            None => out_dim = Some(y.len()),
            Some(d) if d != y.len() => {
                return Err(Error::DimensionMismatch { expected: d, got: y.len() })
            }
            _ => {}
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        out.extend_from_slice(&y);
    }
    Ok(ParticleMeasure {
        dim: out_dim.unwrap_or(measure.dim),
        points: out,
        weights: measure.weights.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_weights() {
        assert!(ParticleMeasure::new(&[vec![0.0], vec![1.0]], vec![0.5, 0.6]).is_err());
        assert!(ParticleMeasure::new(&[vec![0.0], vec![1.0]], vec![-0.5, 1.5]).is_err());
        assert!(ParticleMeasure::new(&[vec![0.0, 1.0], vec![1.0]], vec![0.5, 0.5]).is_err());
        assert!(ParticleMeasure::new(&[], vec![]).is_err());
    }

    #[test]
    fn identity_pushforward_is_noop() {
        let m = ParticleMeasure::uniform(&[vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
        assert_eq!(pushforward(&m, |x| x.to_vec()).unwrap(), m);
    }

    #[test]
    fn translated_dirac() {
        let m = ParticleMeasure::dirac(&[-2.0, 0.0]);
        let moved = pushforward(&m, |x| vec![x[0] + 1.0, x[1]]).unwrap();
        assert_eq!(moved, ParticleMeasure::dirac(&[-1.0, 0.0]));
    }

    #[test]
    fn non_finite_image_names_the_particle() {
        let m = ParticleMeasure::uniform(&[vec![1.0], vec![0.0], vec![2.0]]).unwrap();
        let err = pushforward(&m, |x| vec![1.0 / x[0]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1 }));
    }
}
