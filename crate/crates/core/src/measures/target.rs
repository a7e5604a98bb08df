use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{dist, BoxRegion};

/// Points with `|signed distance| ≤ BOUNDARY_TOL` count as inside (sets are closed).
pub const BOUNDARY_TOL: f64 = 1e-12;

pub type SdfFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Set described by a 1-Lipschitz signed distance (negative inside).
#[derive(Clone)]
pub struct ImplicitSet {
    pub dim: usize,
    pub sdf: SdfFn,
    pub bbox: BoxRegion,
    pub label: String,
}

impl fmt::Debug for ImplicitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImplicitSet")
            .field("label", &self.label)
            .field("bbox", &self.bbox)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum TargetShape {
    BallUnion(Vec<Ball>),
    /// Simple polygon with counterclockwise vertices.
    Polygon(Vec<[f64; 2]>),
    Implicit(ImplicitSet),
}

/// Closed target set `A` with its interior-ball radius (0 when not asserted).
#[derive(Debug, Clone)]
pub struct TargetSet {
    shape: TargetShape,
    inner_ball_radius: f64,
}

impl TargetSet {
    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        Self::ball_union(vec![Ball {
            center: center.to_vec(),
            radius,
        }])
    }

    pub fn ball_union(balls: Vec<Ball>) -> Result<Self> {
        let first = balls
            .first()
            .ok_or_else(|| Error::InvalidArgument("ball union needs at least one ball".into()))?;
        let dim = first.center.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("ball center must have coordinates".into()));
        }
        for b in &balls {
            if b.center.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: b.center.len() });
            }
            if !(b.radius > 0.0) {
                return Err(Error::InvalidArgument(format!("ball radius must be positive, got {}", b.radius)));
            }
        }
        let inner = balls.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min);
        Ok(TargetSet {
            shape: TargetShape::BallUnion(balls),
            inner_ball_radius: inner,
        })
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument("polygon needs at least three vertices".into()));
        }
        let area = signed_area(&vertices);
        if !(area > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "polygon must be counterclockwise with positive area, got signed area {area}"
            )));
        }
        if !polygon_is_simple(&vertices) {
            return Err(Error::InvalidArgument("polygon edges intersect".into()));
        }
        Ok(TargetSet {
            shape: TargetShape::Polygon(vertices),
            inner_ball_radius: 0.0,
        })
    }

    /// Axis-aligned rectangle as a counterclockwise polygon.
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        Self::polygon(vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]])
    }

    pub fn implicit(set: ImplicitSet, inner_ball_radius: f64) -> Self {
        TargetSet {
            shape: TargetShape::Implicit(set),
            inner_ball_radius: inner_ball_radius.max(0.0),
        }
    }

    pub fn shape(&self) -> &TargetShape {
        &self.shape
    }

    pub fn inner_ball_radius(&self) -> f64 {
        self.inner_ball_radius
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            TargetShape::BallUnion(b) => b[0].center.len(),
            TargetShape::Polygon(_) => 2,
            TargetShape::Implicit(s) => s.dim,
        }
    }

    /// Signed distance, negative inside; exact for single balls and polygons,
    /// a 1-Lipschitz surrogate for unions.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            TargetShape::BallUnion(balls) => balls
                .iter()
                .map(|b| dist(x, &b.center) - b.radius)
                .fold(f64::INFINITY, f64::min),
            TargetShape::Polygon(v) => polygon_sdf(v, [x[0], x[1]]),
            TargetShape::Implicit(s) => (s.sdf)(x),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) <= BOUNDARY_TOL
    }

    pub fn bounding_box(&self) -> BoxRegion {
        match &self.shape {
            TargetShape::BallUnion(balls) => {
                let dim = balls[0].center.len();
                let mut lo = vec![f64::INFINITY; dim];
                let mut hi = vec![f64::NEG_INFINITY; dim];
                for b in balls {
                    for k in 0..dim {
                        lo[k] = lo[k].min(b.center[k] - b.radius);
                        hi[k] = hi[k].max(b.center[k] + b.radius);
                    }
                }
                BoxRegion::new(lo, hi)
            }
            TargetShape::Polygon(v) => {
                BoxRegion::bounding(v.iter().map(|p| &p[..])).expect("polygon has vertices")
            }
            TargetShape::Implicit(s) => s.bbox.clone(),
        }
    }

    /// Diameter (exact for ball unions and polygons, bounding-box diagonal otherwise).
    pub fn diameter(&self) -> f64 {
        match &self.shape {
            TargetShape::BallUnion(balls) => {
                let mut d: f64 = 0.0;
                for a in balls {
                    for b in balls {
                        d = d.max(dist(&a.center, &b.center) + a.radius + b.radius);
                    }
                }
                d
            }
            TargetShape::Polygon(v) => {
                let mut d: f64 = 0.0;
                for a in v {
                    for b in v {
                        d = d.max(dist(a, b));
                    }
                }
                d
            }
            TargetShape::Implicit(s) => 2.0 * s.bbox.half_diagonal(),
        }
    }

    /// Samples pairs in the bounding box and checks the signed distance is 1-Lipschitz.
    pub fn check_lipschitz(&self, samples_per_axis: usize, tol: f64) -> Result<()> {
        let bbox = self.bounding_box().inflate(0.25 * self.bounding_box().max_width());
        let dim = self.dim();
        let n = samples_per_axis.max(2);
        let mut pts = Vec::new();
        let mut idx = vec![0usize; dim];
        'outer: loop {
            pts.push(
                (0..dim)
                    .map(|k| bbox.lo[k] + (bbox.hi[k] - bbox.lo[k]) * idx[k] as f64 / (n - 1) as f64)
                    .collect::<Vec<f64>>(),
            );
            for v in idx.iter_mut() {
                *v += 1;
                if *v < n {
                    continue 'outer;
                }
                *v = 0;
            }
            break;
        }
        let vals: Vec<f64> = pts.iter().map(|p| self.signed_distance(p)).collect();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let d = dist(&pts[i], &pts[j]);
                if (vals[i] - vals[j]).abs() > d * (1.0 + tol) {
                    return Err(Error::InvalidArgument(format!(
                        "signed distance is not 1-Lipschitz between {:?} and {:?}",
                        pts[i], pts[j]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Closed `r`-neighbourhood `A_r`.
pub fn neighborhood(set: &TargetSet, r: f64) -> Result<TargetSet> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("neighbourhood radius must be nonnegative, got {r}")));
    }
    if r == 0.0 {
        return Ok(set.clone());
    }
    // A_r is a union of closed balls of radius (inner + r).
    let inner = set.inner_ball_radius + r;
    Ok(match &set.shape {
        TargetShape::BallUnion(balls) => TargetSet {
            shape: TargetShape::BallUnion(
                balls
                    .iter()
                    .map(|b| Ball {
                        center: b.center.clone(),
                        radius: b.radius + r,
                    })
                    .collect(),
            ),
            inner_ball_radius: inner,
        },
        _ => {
            let base = set.clone();
            let label = match &set.shape {
                TargetShape::Implicit(s) => format!("{}+{r}", s.label),
                _ => format!("polygon+{r}"),
            };
            TargetSet {
                shape: TargetShape::Implicit(ImplicitSet {
                    dim: set.dim(),
                    sdf: Arc::new(move |x: &[f64]| base.signed_distance(x) - r),
                    bbox: set.bounding_box().inflate(r),
                    label,
                }),
                inner_ball_radius: inner,
            }
        }
    })
}

pub(crate) fn signed_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n)
        .map(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0] - p[0], a[1] + t * ab[1] - p[1]];
    (q[0] * q[0] + q[1] * q[1]).sqrt()
}

fn polygon_sdf(v: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = v.len();
    let mut d = f64::INFINITY;
    let mut inside = false;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        d = d.min(segment_distance(p, a, b));
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
    }
    if inside {
        -d
    } else {
        d
    }
}

pub(crate) fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    }
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn polygon_is_simple(v: &[[f64; 2]]) -> bool {
    let n = v.len();
    for i in 0..n {
        for j in (i + 1)..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_offset() {
        let a = TargetSet::ball(&[0.0, 0.0], 1.0).unwrap();
        let b = neighborhood(&a, 0.5).unwrap();
        match b.shape() {
            TargetShape::BallUnion(balls) => assert_eq!(balls[0].radius, 1.5),
            _ => panic!("expected a ball"),
        }
        assert_eq!(b.inner_ball_radius(), 1.5);
    }

    #[test]
    fn zero_offset_is_identity() {
        let sq = TargetSet::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap();
        let same = neighborhood(&sq, 0.0).unwrap();
        for p in [[0.5, 0.5], [1.2, 0.3], [1.0, 1.0]] {
            assert_eq!(sq.signed_distance(&p), same.signed_distance(&p));
        }
    }

    #[test]
    fn square_offset_membership() {
        let sq = TargetSet::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap();
        let grown = neighborhood(&sq, 0.5).unwrap();
        assert!(matches!(grown.shape(), TargetShape::Implicit(_)));
        assert!(grown.contains(&[1.4, 0.5]));
        assert!(!grown.contains(&[1.6, 0.5]));
        assert_eq!(grown.inner_ball_radius(), 0.5);
    }

    #[test]
    fn polygon_validation() {
        assert!(TargetSet::polygon(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).is_err());
        let bowtie = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(TargetSet::polygon(bowtie).is_err());
    }

    #[test]
    fn boundary_counts_as_inside() {
        let a = TargetSet::ball(&[0.0, 0.0], 1.0).unwrap();
        assert!(a.contains(&[-1.0, 0.0]));
        assert!(!a.contains(&[-1.0 - 1e-9, 0.0]));
    }

    #[test]
    fn signed_distances_are_lipschitz() {
        let u = TargetSet::ball_union(vec![
            Ball { center: vec![0.0, 0.0], radius: 1.0 },
            Ball { center: vec![1.5, 0.0], radius: 0.7 },
        ])
        .unwrap();
        u.check_lipschitz(12, 1e-9).unwrap();
        let sq = neighborhood(&TargetSet::rectangle([0.0, 0.0], [1.0, 2.0]).unwrap(), 0.2).unwrap();
        sq.check_lipschitz(12, 1e-9).unwrap();
        assert!((u.diameter() - 3.2).abs() < 1e-12);
    }
}
