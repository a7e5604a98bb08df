//! Adaptive cubature of densities over boxes and over sublevel sets `{g ≤ 0}`.
//!
//! Cells are classified with a Lipschitz bound on `g`: if `|g(center)|`
//! exceeds `lip · half_diagonal` the whole cell lies on one side and the
//! density is integrated with a tensor Gauss rule. Cells cut by the interface
//! are refined; in two dimensions the interface inside a leaf is replaced by
//! its linear model and the clipped polygon is integrated with a degree-5
//! triangle rule, which keeps the result smooth under small motions of the
//! interface.

use crate::error::{Error, Result};
use crate::geom::{pairwise_sum, BoxRegion};
use crate::measures::{AnalyticDensity, BOUNDARY_TOL};

const GAUSS_X: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS_W: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

// Dunavant degree-5 rule: (barycentric a, b, b) orbits.
const TRI_CENTER_W: f64 = 0.225;
const TRI_ORBITS: [(f64, f64, f64); 2] = [
    (0.059_715_871_789_770, 0.470_142_064_105_115, 0.132_394_152_788_506),
    (0.797_426_985_353_087, 0.101_286_507_323_456, 0.125_939_180_544_827),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Cells per axis of the initial grid.
    pub base_cells: usize,
    /// Maximum number of bisections below the initial grid.
    pub max_depth: usize,
    /// Target absolute error.
    pub tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            base_cells: 16,
            max_depth: 12,
            tol: 1e-6,
        }
    }
}

impl QuadratureConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// Value with its accumulated refinement-difference error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureEstimate {
    pub value: f64,
    pub error: f64,
}

impl QuadratureEstimate {
    pub fn zero() -> Self {
        QuadratureEstimate { value: 0.0, error: 0.0 }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Inside,
    Outside,
    Cut,
}

struct Cell {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Cell {
    fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    fn half_diagonal(&self) -> f64 {
        0.5 * crate::geom::dist(&self.lo, &self.hi)
    }

    fn width(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).fold(0.0, f64::max)
    }

    fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    fn children(&self) -> Vec<Cell> {
        let n = self.lo.len();
        let mid = self.center();
        (0..1usize << n)
            .map(|code| {
                let mut lo = self.lo.clone();
                let mut hi = self.hi.clone();
                for k in 0..n {
                    if code >> k & 1 == 0 {
                        hi[k] = mid[k];
                    } else {
                        lo[k] = mid[k];
                    }
                }
                Cell { lo, hi }
            })
            .collect()
    }
}

type Level<'a> = &'a dyn Fn(&[f64]) -> Result<f64>;

struct Integrator<'a> {
    density: &'a AnalyticDensity,
    level: Option<Level<'a>>,
    lip: f64,
    cfg: QuadratureConfig,
    region_width: f64,
    region_volume: f64,
    err_sum: f64,
    coarse_sum: f64,
    unconverged: bool,
}

impl<'a> Integrator<'a> {
    fn classify(&self, cell: &Cell) -> Result<Side> {
        let Some(level) = self.level else {
            return Ok(Side::Inside);
        };
        let g = level(&cell.center())?;
        let reach = self.lip * cell.half_diagonal() * (1.0 + 1e-9);
        Ok(if g > reach + BOUNDARY_TOL {
            Side::Outside
        } else if g < -reach {
            Side::Inside
        } else {
            Side::Cut
        })
    }

    fn gauss(&self, cell: &Cell) -> f64 {
        let n = cell.lo.len();
        let half: Vec<f64> = cell.lo.iter().zip(&cell.hi).map(|(a, b)| 0.5 * (b - a)).collect();
        let mid = cell.center();
        let jac: f64 = half.iter().product();
        let mut idx = vec![0usize; n];
        let mut x = vec![0.0; n];
        let mut sum = 0.0;
        loop {
            let mut w = 1.0;
            for k in 0..n {
                x[k] = mid[k] + half[k] * GAUSS_X[idx[k]];
                w *= GAUSS_W[idx[k]];
            }
            sum += w * self.density.eval(&x);
            if !odometer(&mut idx, 4) {
                break;
            }
        }
        sum * jac
    }

    fn cut_estimate(&self, cell: &Cell) -> Result<f64> {
        let level = self.level.expect("cut cells only arise with a level function");
        if cell.lo.len() == 2 {
            let (x0, y0, x1, y1) = (cell.lo[0], cell.lo[1], cell.hi[0], cell.hi[1]);
            let g00 = level(&[x0, y0])?;
            let g10 = level(&[x1, y0])?;
            let g01 = level(&[x0, y1])?;
            let g11 = level(&[x1, y1])?;
            let gx = ((g10 + g11) - (g00 + g01)) / (2.0 * (x1 - x0));
            let gy = ((g01 + g11) - (g00 + g10)) / (2.0 * (y1 - y0));
            let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            // least-squares plane through the corners; anchoring at the center
            // value instead would give a tangent line that is reproduced
            // exactly by the children on symmetric configurations
            let mean = 0.25 * (g00 + g10 + g01 + g11);
            let offset = mean - gx * cx - gy * cy;
            let square = [[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
            let poly = clip_halfplane(&square, gx, gy, offset);
            Ok(integrate_polygon(self.density, &poly))
        } else {
            let n = cell.lo.len();
            let half: Vec<f64> = cell.lo.iter().zip(&cell.hi).map(|(a, b)| 0.5 * (b - a)).collect();
            let mid = cell.center();
            let jac: f64 = half.iter().product();
            let mut idx = vec![0usize; n];
            let mut x = vec![0.0; n];
            let mut sum = 0.0;
            loop {
                let mut w = 1.0;
                for k in 0..n {
                    x[k] = mid[k] + half[k] * GAUSS_X[idx[k]];
                    w *= GAUSS_W[idx[k]];
                }
                if level(&x)? <= BOUNDARY_TOL {
                    sum += w * self.density.eval(&x);
                }
                if !odometer(&mut idx, 4) {
                    break;
                }
            }
            Ok(sum * jac)
        }
    }

    fn estimate(&self, cell: &Cell, side: Side) -> Result<f64> {
        match side {
            Side::Outside => Ok(0.0),
            Side::Inside => Ok(self.gauss(cell)),
            Side::Cut => self.cut_estimate(cell),
        }
    }

    fn local_tol(&self, cell: &Cell, side: Side) -> f64 {
        let n = cell.lo.len() as f64;
        match side {
            Side::Cut => self.cfg.tol * (cell.width() / self.region_width).powf(n - 1.0) / (2.0 * n),
            _ => 0.5 * self.cfg.tol * cell.volume() / self.region_volume,
        }
    }

    fn refine(&mut self, cell: Cell, side: Side, estimate: f64, depth: usize) -> Result<f64> {
        if side == Side::Outside {
            return Ok(0.0);
        }
        let children = cell.children();
        let mut parts = Vec::with_capacity(children.len());
        for child in &children {
            let s = if side == Side::Inside { Side::Inside } else { self.classify(child)? };
            let e = self.estimate(child, s)?;
            parts.push((s, e));
        }
        let sum = pairwise_sum(&parts.iter().map(|p| p.1).collect::<Vec<_>>());
        let diff = (sum - estimate).abs();
        let tol = self.local_tol(&cell, side);
        if diff <= tol || depth + 1 >= self.cfg.max_depth {
            if diff > tol {
                self.unconverged = true;
            }
            self.err_sum += diff;
            self.coarse_sum += estimate;
            return Ok(sum);
        }
        let mut values = Vec::with_capacity(children.len());
        for (child, (s, e)) in children.into_iter().zip(parts) {
            values.push(self.refine(child, s, e, depth + 1)?);
        }
        Ok(pairwise_sum(&values))
    }
}

fn odometer(idx: &mut [usize], base: usize) -> bool {
    for v in idx.iter_mut() {
        *v += 1;
        if *v < base {
            return true;
        }
        *v = 0;
    }
    false
}

fn clip_halfplane(poly: &[[f64; 2]], a: f64, b: f64, c: f64) -> Vec<[f64; 2]> {
    let f = |p: &[f64; 2]| a * p[0] + b * p[1] + c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (fp, fq) = (f(&p), f(&q));
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let t = fp / (fp - fq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

fn integrate_polygon(density: &AnalyticDensity, poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let p0 = poly[0];
    let mut sum = 0.0;
    for i in 1..poly.len() - 1 {
        let (p1, p2) = (poly[i], poly[i + 1]);
        let area = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])).abs();
        if area == 0.0 {
            continue;
        }
        let at = |l0: f64, l1: f64, l2: f64| {
            [
                l0 * p0[0] + l1 * p1[0] + l2 * p2[0],
                l0 * p0[1] + l1 * p1[1] + l2 * p2[1],
            ]
        };
        let third = 1.0 / 3.0;
        let mut s = TRI_CENTER_W * density.eval(&at(third, third, third));
        for &(a, b, w) in &TRI_ORBITS {
            s += w * (density.eval(&at(a, b, b)) + density.eval(&at(b, a, b)) + density.eval(&at(b, b, a)));
        }
        sum += area * s;
    }
    sum
}

fn base_cells(region: &BoxRegion, per_axis: usize) -> Vec<Cell> {
    let n = region.dim();
    let per_axis = per_axis.max(1);
    let mut idx = vec![0usize; n];
    let mut cells = Vec::new();
    loop {
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for k in 0..n {
            let w = (region.hi[k] - region.lo[k]) / per_axis as f64;
            lo[k] = region.lo[k] + w * idx[k] as f64;
            hi[k] = if idx[k] + 1 == per_axis {
                region.hi[k]
            } else {
                region.lo[k] + w * (idx[k] + 1) as f64
            };
        }
        cells.push(Cell { lo, hi });
        if !odometer(&mut idx, per_axis) {
            break;
        }
    }
    cells
}

fn run(
    density: &AnalyticDensity,
    region: &BoxRegion,
    level: Option<Level<'_>>,
    lip: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureEstimate> {
    if region.dim() != density.dim() {
        return Err(Error::DimensionMismatch {
            expected: density.dim(),
            got: region.dim(),
        });
    }
    let mut it = Integrator {
        density,
        level,
        lip,
        cfg: *cfg,
        region_width: region.max_width(),
        region_volume: region.volume(),
        err_sum: 0.0,
        coarse_sum: 0.0,
        unconverged: false,
    };
    let mut parts = Vec::new();
    for cell in base_cells(region, cfg.base_cells) {
        let side = it.classify(&cell)?;
        let e = it.estimate(&cell, side)?;
        parts.push(it.refine(cell, side, e, 0)?);
    }
    let value = pairwise_sum(&parts);
    if it.unconverged && it.err_sum > cfg.tol {
        return Err(Error::QuadratureNonConvergence {
            coarse: it.coarse_sum,
            fine: value,
        });
    }
    Ok(QuadratureEstimate {
        value,
        error: it.err_sum,
    })
}

/// `∫_{region ∩ {level ≤ 0}} ρ`, where `lip` bounds the Lipschitz constant of `level`.
pub fn integrate_region(
    density: &AnalyticDensity,
    region: &BoxRegion,
    level: &dyn Fn(&[f64]) -> Result<f64>,
    lip: f64,
    cfg: &QuadratureConfig,
) -> Result<QuadratureEstimate> {
    run(density, region, Some(level), lip, cfg)
}

/// `∫_{region} ρ`.
pub fn integrate_box(
    density: &AnalyticDensity,
    region: &BoxRegion,
    cfg: &QuadratureConfig,
) -> Result<QuadratureEstimate> {
    run(density, region, None, 0.0, cfg)
}

/// Adaptive Simpson rule on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}
