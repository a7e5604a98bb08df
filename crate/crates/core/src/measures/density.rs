use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;

use super::ParticleMeasure;
use crate::error::{Error, Result};
use crate::geom::{unit_sphere_area, BoxRegion};
use crate::quadrature::{adaptive_simpson, integrate_box, QuadratureConfig};

pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type SamplerFn = Arc<dyn Fn(&mut dyn rand::RngCore) -> Vec<f64> + Send + Sync>;

/// Absolutely continuous probability measure `ρ λ` with a known bounding box.
#[derive(Clone)]
pub struct AnalyticDensity {
    dim: usize,
    eval: DensityFn,
    support: BoxRegion,
    normalization_tol: f64,
    smooth: bool,
    label: String,
    sampler: Option<SamplerFn>,
}

impl fmt::Debug for AnalyticDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticDensity")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("support", &self.support)
            .field("smooth", &self.smooth)
            .finish()
    }
}

impl AnalyticDensity {
    /// Wraps an evaluator. `smooth` asserts that `ρ` is continuously differentiable.
    pub fn new(
        label: impl Into<String>,
        support: BoxRegion,
        eval: DensityFn,
        smooth: bool,
    ) -> Self {
        AnalyticDensity {
            dim: support.dim(),
            eval,
            support,
            normalization_tol: 1e-6,
            smooth,
            label: label.into(),
            sampler: None,
        }
    }

    /// The scaled standard mollifier `η_R(x − c)`: smooth, supported on the closed ball.
    pub fn bump(center: &[f64], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("bump radius must be positive, got {radius}")));
        }
        let c = center.to_vec();
        let support = BoxRegion::new(
            c.iter().map(|v| v - radius).collect(),
            c.iter().map(|v| v + radius).collect(),
        );
        let cc = c.clone();
        let eval: DensityFn = Arc::new(move |x: &[f64]| standard_mollifier_at(x, &cc, radius));
        let sc = c.clone();
        let sampler: SamplerFn = Arc::new(move |rng: &mut dyn rand::RngCore| {
            let mut z = sample_unit_bump(sc.len(), rng);
            for (k, v) in z.iter_mut().enumerate() {
                *v = sc[k] + radius * *v;
            }
            z
        });
        let mut d = AnalyticDensity::new(format!("bump({center:?}, {radius})"), support, eval, true);
        d.sampler = Some(sampler);
        Ok(d)
    }

    /// Uniform density on a box (not smooth on the box faces).
    pub fn uniform_box(region: BoxRegion) -> Self {
        let vol = region.volume();
        let r = region.clone();
        let eval: DensityFn = Arc::new(move |x: &[f64]| if r.contains(x) { 1.0 / vol } else { 0.0 });
        let s = region.clone();
        let sampler: SamplerFn = Arc::new(move |rng: &mut dyn rand::RngCore| {
            (0..s.dim()).map(|k| rng.gen_range(s.lo[k]..=s.hi[k])).collect()
        });
        let mut d = AnalyticDensity::new("uniform_box", region, eval, false);
        d.sampler = Some(sampler);
        d
    }

    pub fn with_normalization_tol(mut self, tol: f64) -> Self {
        self.normalization_tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if !self.support.contains(x) {
            return 0.0;
        }
        (self.eval)(x)
    }

    pub fn evaluator(&self) -> DensityFn {
        self.eval.clone()
    }

    pub fn support(&self) -> &BoxRegion {
        &self.support
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn normalization_tol(&self) -> f64 {
        self.normalization_tol
    }

    /// `∫ ρ` over the support box.
    pub fn total_mass(&self, cfg: &QuadratureConfig) -> Result<f64> {
        Ok(integrate_box(self, &self.support, cfg)?.value)
    }

    /// Checks `ρ ≥ 0` on a sample grid and `|∫ρ − 1| ≤ normalization_tol`.
    pub fn validate(&self, cfg: &QuadratureConfig) -> Result<()> {
        let n = 21usize;
        let mut idx = vec![0usize; self.dim];
        let mut x = vec![0.0; self.dim];
        loop {
            for k in 0..self.dim {
                let f = idx[k] as f64 / (n - 1) as f64;
                x[k] = self.support.lo[k] + f * (self.support.hi[k] - self.support.lo[k]);
            }
            let v = self.eval(&x);
            if !(v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "density {} is negative or NaN at {x:?}",
                    self.label
                )));
            }
            if !advance(&mut idx, n) {
                break;
            }
        }
        let mass = self.total_mass(cfg)?;
        if (mass - 1.0).abs() > self.normalization_tol {
            return Err(Error::InvalidArgument(format!(
                "density {} integrates to {mass}, tolerance {}",
                self.label, self.normalization_tol
            )));
        }
        Ok(())
    }

    /// Draws `n` equal-weight samples. Uses the exact sampler when the density
    /// carries one, otherwise rejection from the support box against a grid
    /// envelope.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<ParticleMeasure> {
        let mut points = Vec::with_capacity(n * self.dim);
        match &self.sampler {
            Some(s) => {
                for _ in 0..n {
                    points.extend(s(rng));
                }
            }
            None => {
                let envelope = 1.5 * self.grid_max(64);
                if !(envelope > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "density {} vanishes on its sample grid",
                        self.label
                    )));
                }
                let mut x = vec![0.0; self.dim];
                let mut accepted = 0;
                while accepted < n {
                    for k in 0..self.dim {
                        x[k] = rng.gen_range(self.support.lo[k]..=self.support.hi[k]);
                    }
                    if rng.gen::<f64>() * envelope <= self.eval(&x) {
                        points.extend_from_slice(&x);
                        accepted += 1;
                    }
                }
            }
        }
        ParticleMeasure::from_flat(self.dim, points, vec![1.0 / n as f64; n])
    }

    fn grid_max(&self, per_axis: usize) -> f64 {
        let per_axis = per_axis.max(2);
        let mut idx = vec![0usize; self.dim];
        let mut x = vec![0.0; self.dim];
        let mut best: f64 = 0.0;
        loop {
            for k in 0..self.dim {
                let f = (idx[k] as f64 + 0.5) / per_axis as f64;
                x[k] = self.support.lo[k] + f * (self.support.hi[k] - self.support.lo[k]);
            }
            best = best.max(self.eval(&x));
            if !advance(&mut idx, per_axis) {
                break;
            }
        }
        best
    }
}

fn advance(idx: &mut [usize], n: usize) -> bool {
    for v in idx.iter_mut() {
        *v += 1;
        if *v < n {
            return true;
        }
        *v = 0;
    }
    false
}

/// Normalization constant `c_n` of `η(x) = c_n exp(1/(|x|²−1))` on `|x| < 1`.
pub fn mollifier_constant(n: usize) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("mollifier cache poisoned");
    *map.entry(n).or_insert_with(|| {
        let radial = adaptive_simpson(
            &|r: f64| {
                if r >= 1.0 {
                    0.0
                } else {
                    r.powi(n as i32 - 1) * (1.0 / (r * r - 1.0)).exp()
                }
            },
            0.0,
            1.0,
            1e-14,
        );
        1.0 / (unit_sphere_area(n) * radial)
    })
}

/// `η_ε(x) = ε⁻ⁿ η(x/ε)`.
pub fn standard_mollifier(x: &[f64], eps: f64) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum::<f64>() / (eps * eps);
    if r2 >= 1.0 {
        return 0.0;
    }
    mollifier_constant(x.len()) * (1.0 / (r2 - 1.0)).exp() / eps.powi(x.len() as i32)
}

fn standard_mollifier_at(x: &[f64], center: &[f64], eps: f64) -> f64 {
    let r2: f64 = x
        .iter()
        .zip(center)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / (eps * eps);
    if r2 >= 1.0 {
        return 0.0;
    }
    mollifier_constant(x.len()) * (1.0 / (r2 - 1.0)).exp() / eps.powi(x.len() as i32)
}

/// A point of the unit ball distributed with density `η`, by rejection.
fn sample_unit_bump(dim: usize, rng: &mut dyn rand::RngCore) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r2: f64 = z.iter().map(|v| v * v).sum();
        if r2 >= 1.0 {
            continue;
        }
        // exp(1/(r²−1)) ≤ e⁻¹ with equality at the center
        let accept = (1.0 / (r2 - 1.0) + 1.0).exp();
        if rng.gen::<f64>() <= accept {
            return z;
        }
    }
}

/// Particles bucketed on a grid with cell size ε for neighbor lookups.
struct NeighborGrid {
    dim: usize,
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<u32>>,
}

impl NeighborGrid {
    const MAX_DIM: usize = 3;

    fn build(measure: &ParticleMeasure, cell: f64) -> Option<Self> {
        if measure.dim() > Self::MAX_DIM {
            return None;
        }
        let mut buckets: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in measure.points().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        Some(NeighborGrid {
            dim: measure.dim(),
            cell,
            buckets,
        })
    }

    fn key(p: &[f64], cell: f64) -> [i64; 3] {
        let mut k = [0i64; 3];
        for (slot, v) in k.iter_mut().zip(p) {
            *slot = (v / cell).floor() as i64;
        }
        k
    }

    fn for_each_near(&self, x: &[f64], mut f: impl FnMut(u32)) {
        let base = Self::key(x, self.cell);
        let span = 3usize.pow(self.dim as u32);
        for code in 0..span {
            let mut key = base;
            let mut c = code;
            for slot in key.iter_mut().take(self.dim) {
                *slot += (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(ids) = self.buckets.get(&key) {
                for &i in ids {
                    f(i);
                }
            }
        }
    }
}

/// `θ ∗ η_ε` as an analytic density.
pub fn mollify(measure: &ParticleMeasure, eps: f64) -> Result<AnalyticDensity> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("mollification radius must be positive, got {eps}")));
    }
    let support = measure.bounding_box().inflate(eps);
    let cloud = Arc::new(measure.clone());
    let grid = if measure.len() > 32 {
        NeighborGrid::build(measure, eps).map(Arc::new)
    } else {
        None
    };
    let c_n = mollifier_constant(measure.dim());
    let scale = c_n / eps.powi(measure.dim() as i32);
    let inv_eps2 = 1.0 / (eps * eps);

    let ev_cloud = cloud.clone();
    let eval: DensityFn = Arc::new(move |x: &[f64]| {
        let term = |i: usize| -> f64 {
            let p = ev_cloud.point(i);
            let r2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * inv_eps2;
            if r2 >= 1.0 {
                0.0
            } else {
                ev_cloud.weight(i) * (1.0 / (r2 - 1.0)).exp()
            }
        };
        match &grid {
            Some(g) => {
                let mut ids: Vec<u32> = Vec::new();
                g.for_each_near(x, |i| ids.push(i));
                // fixed summation order regardless of bucket layout
                ids.sort_unstable();
                scale * ids.iter().map(|&i| term(i as usize)).sum::<f64>()
            }
            None => scale * (0..ev_cloud.len()).map(term).sum::<f64>(),
        }
    });

    let cumulative: Arc<Vec<f64>> = Arc::new(
        cloud
            .weights()
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect(),
    );
    let s_cloud = cloud.clone();
    let sampler: SamplerFn = Arc::new(move |rng: &mut dyn rand::RngCore| {
        let total = *cumulative.last().expect("nonempty");
        let u = rng.gen::<f64>() * total;
        let i = cumulative.partition_point(|c| *c <= u).min(s_cloud.len() - 1);
        let mut z = sample_unit_bump(s_cloud.dim(), rng);
        for (k, v) in z.iter_mut().enumerate() {
            *v = s_cloud.point(i)[k] + eps * *v;
        }
        z
    });

    let mut d = AnalyticDensity::new(format!("mollified(eps={eps})"), support, eval, true);
    d.sampler = Some(sampler);
    Ok(d)
}
