use crate::error::{Error, Result};
use crate::geom::pairwise_sum;
use crate::measures::target::{segments_intersect, Ball, ImplicitSet, TargetSet, TargetShape};

/// Contiguous run of mesh nodes forming one polyline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryPiece {
    pub start: usize,
    pub len: usize,
    pub closed: bool,
}

/// Discretized boundary of a planar set: nodes with outward unit normals and
/// trapezoidal arc-length weights, grouped into polylines.
#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    nodes: Vec<[f64; 2]>,
    normals: Vec<[f64; 2]>,
    weights: Vec<f64>,
    pieces: Vec<BoundaryPiece>,
}

fn seg_len(a: [f64; 2], b: [f64; 2]) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n > 0.0 {
        [v[0] / n, v[1] / n]
    } else {
        [0.0, 0.0]
    }
}

fn trapezoid_weights(nodes: &[[f64; 2]], closed: bool) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    let segs = if closed { n } else { n.saturating_sub(1) };
    for i in 0..segs {
        let l = seg_len(nodes[i], nodes[(i + 1) % n]);
        w[i] += 0.5 * l;
        w[(i + 1) % n] += 0.5 * l;
    }
    w
}

/// Normals from polyline geometry: tangent (central difference, one-sided at
/// open ends) rotated by −90°, which is outward for counterclockwise curves.
fn polyline_normals(nodes: &[[f64; 2]], closed: bool) -> Vec<[f64; 2]> {
    let n = nodes.len();
    (0..n)
        .map(|i| {
            let (prev, next) = if closed {
                (nodes[(i + n - 1) % n], nodes[(i + 1) % n])
            } else {
                (nodes[i.saturating_sub(1)], nodes[(i + 1).min(n - 1)])
            };
            let t = [next[0] - prev[0], next[1] - prev[1]];
            unit([t[1], -t[0]])
        })
        .collect()
}

impl BoundaryMesh {
    fn empty() -> Self {
        BoundaryMesh {
            nodes: Vec::new(),
            normals: Vec::new(),
            weights: Vec::new(),
            pieces: Vec::new(),
        }
    }

    fn push_piece(&mut self, nodes: Vec<[f64; 2]>, normals: Vec<[f64; 2]>, weights: Vec<f64>, closed: bool) {
        if nodes.is_empty() {
            return;
        }
        self.pieces.push(BoundaryPiece {
            start: self.nodes.len(),
            len: nodes.len(),
            closed,
        });
        self.nodes.extend(nodes);
        self.normals.extend(normals);
        self.weights.extend(weights);
    }

    /// Builds a mesh from counterclockwise polylines, deriving normals and
    /// weights from the geometry.
    pub fn from_polylines(polylines: Vec<(Vec<[f64; 2]>, bool)>) -> Self {
        let mut mesh = Self::empty();
        for (nodes, closed) in polylines {
            let normals = polyline_normals(&nodes, closed);
            let weights = trapezoid_weights(&nodes, closed);
            mesh.push_piece(nodes, normals, weights, closed);
        }
        mesh
    }

    /// Same piece structure with moved nodes; normals and weights are rebuilt.
    pub fn with_nodes(&self, nodes: Vec<[f64; 2]>) -> Result<Self> {
        if nodes.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes.len(),
                got: nodes.len(),
            });
        }
        let polylines = self
            .pieces
            .iter()
            .map(|p| (nodes[p.start..p.start + p.len].to_vec(), p.closed))
            .collect();
        Ok(Self::from_polylines(polylines))
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn normals(&self) -> &[[f64; 2]] {
        &self.normals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pieces(&self) -> &[BoundaryPiece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Total σ-weight.
    pub fn total_weight(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Sum of the polyline segment lengths.
    pub fn polyline_length(&self) -> f64 {
        let lens: Vec<f64> = self
            .pieces
            .iter()
            .map(|p| {
                let nodes = &self.nodes[p.start..p.start + p.len];
                let segs = if p.closed { p.len } else { p.len - 1 };
                (0..segs).map(|i| seg_len(nodes[i], nodes[(i + 1) % p.len])).sum::<f64>()
            })
            .collect();
        pairwise_sum(&lens)
    }

    /// `Σ f(node, normal) · σ` with a fixed summation order.
    pub fn integrate(&self, f: impl Fn([f64; 2], [f64; 2]) -> f64) -> f64 {
        let terms: Vec<f64> = (0..self.nodes.len())
            .map(|i| f(self.nodes[i], self.normals[i]) * self.weights[i])
            .collect();
        pairwise_sum(&terms)
    }

    /// True when two non-adjacent segments of the mesh cross.
    pub fn self_intersects(&self) -> bool {
        let mut segs: Vec<(usize, usize, [f64; 2], [f64; 2])> = Vec::new();
        for (pi, p) in self.pieces.iter().enumerate() {
            let count = if p.closed { p.len } else { p.len.saturating_sub(1) };
            for i in 0..count {
                let a = self.nodes[p.start + i];
                let b = self.nodes[p.start + (i + 1) % p.len];
                segs.push((pi, i, a, b));
            }
        }
        for i in 0..segs.len() {
            let (pa, ia, a1, a2) = segs[i];
            let (lo_x, hi_x) = (a1[0].min(a2[0]), a1[0].max(a2[0]));
            let (lo_y, hi_y) = (a1[1].min(a2[1]), a1[1].max(a2[1]));
            for &(pb, ib, b1, b2) in &segs[i + 1..] {
                if b1[0].max(b2[0]) < lo_x || b1[0].min(b2[0]) > hi_x || b1[1].max(b2[1]) < lo_y || b1[1].min(b2[1]) > hi_y {
                    continue;
                }
                if pa == pb {
                    let p = self.pieces[pa];
                    let adjacent = ib == ia + 1 || (p.closed && ia == 0 && ib + 1 == p.len);
                    if adjacent {
                        continue;
                    }
                }
                if segments_intersect(a1, a2, b1, b2) {
                    return true;
                }
            }
        }
        false
    }
}

/// Meshes `∂A` with node spacing at most `h`.
pub fn boundary_mesh(set: &TargetSet, h: f64) -> Result<BoundaryMesh> {
    if set.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: set.dim() });
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("mesh spacing must be positive, got {h}")));
    }
    match set.shape() {
        TargetShape::BallUnion(balls) => Ok(ball_union_mesh(balls, h)),
        TargetShape::Polygon(v) => Ok(polygon_mesh(v, h)),
        TargetShape::Implicit(s) => implicit_mesh(s, h),
    }
}

fn ball_union_mesh(balls: &[Ball], h: f64) -> BoundaryMesh {
    let mut mesh = BoundaryMesh::empty();
    for (bi, b) in balls.iter().enumerate() {
        let (cx, cy, r) = (b.center[0], b.center[1], b.radius);
        let n = ((2.0 * std::f64::consts::PI * r / h).ceil() as usize).max(8);
        let points: Vec<([f64; 2], [f64; 2])> = (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let (s, c) = a.sin_cos();
                ([cx + r * c, cy + r * s], [c, s])
            })
            .collect();
        let exposed: Vec<bool> = points
            .iter()
            .map(|(p, _)| {
                balls.iter().enumerate().all(|(j, o)| {
                    j == bi || (p[0] - o.center[0]).hypot(p[1] - o.center[1]) >= o.radius
                })
            })
            .collect();
        if exposed.iter().all(|&e| e) {
            let nodes: Vec<[f64; 2]> = points.iter().map(|p| p.0).collect();
            let normals = points.iter().map(|p| p.1).collect();
            let weights = trapezoid_weights(&nodes, true);
            mesh.push_piece(nodes, normals, weights, true);
            continue;
        }
        // rotate so the scan starts on a covered node, then emit exposed runs
        let first_covered = exposed.iter().position(|&e| !e).unwrap();
        let mut run: Vec<usize> = Vec::new();
        for step in 1..=n {
            let k = (first_covered + step) % n;
            if exposed[k] {
                run.push(k);
            } else if !run.is_empty() {
                let nodes: Vec<[f64; 2]> = run.iter().map(|&i| points[i].0).collect();
                let normals = run.iter().map(|&i| points[i].1).collect();
                let weights = trapezoid_weights(&nodes, false);
                mesh.push_piece(nodes, normals, weights, false);
                run.clear();
            }
        }
    }
    mesh
}

fn polygon_mesh(v: &[[f64; 2]], h: f64) -> BoundaryMesh {
    let mut mesh = BoundaryMesh::empty();
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        let len = seg_len(a, b);
        let m = ((len / h).ceil() as usize).max(1);
        let nodes: Vec<[f64; 2]> = (0..=m)
            .map(|k| {
                let t = k as f64 / m as f64;
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
            })
            .collect();
        let normal = unit([b[1] - a[1], a[0] - b[0]]);
        let mut weights = vec![len / m as f64; m + 1];
        weights[0] *= 0.5;
        weights[m] *= 0.5;
        mesh.push_piece(nodes, vec![normal; m + 1], weights, false);
    }
    mesh
}

const PROJECTION_TOL: f64 = 1e-10;

fn sdf_gradient(s: &ImplicitSet, p: [f64; 2]) -> [f64; 2] {
    let d = 1e-7 * (1.0 + p[0].abs().max(p[1].abs()));
    let f = |x: f64, y: f64| (s.sdf)(&[x, y]);
    [
        (f(p[0] + d, p[1]) - f(p[0] - d, p[1])) / (2.0 * d),
        (f(p[0], p[1] + d) - f(p[0], p[1] - d)) / (2.0 * d),
    ]
}

fn project(s: &ImplicitSet, mut p: [f64; 2]) -> Option<[f64; 2]> {
    for _ in 0..60 {
        let g = (s.sdf)(&p);
        if g.abs() <= PROJECTION_TOL {
            return Some(p);
        }
        let grad = sdf_gradient(s, p);
        let gg = grad[0] * grad[0] + grad[1] * grad[1];
        if !(gg > 1e-20) {
            return None;
        }
        p = [p[0] - g * grad[0] / gg, p[1] - g * grad[1] / gg];
    }
    ((s.sdf)(&p).abs() <= PROJECTION_TOL).then_some(p)
}

fn implicit_mesh(s: &ImplicitSet, h: f64) -> Result<BoundaryMesh> {
    let bbox = s.bbox.inflate(h);
    let width = bbox.max_width();
    // start point: first sign change along the horizontal line through the box center
    let y = 0.5 * (bbox.lo[1] + bbox.hi[1]);
    let samples = ((bbox.hi[0] - bbox.lo[0]) / (0.25 * h)).ceil().max(64.0) as usize;
    let xs = |k: usize| bbox.lo[0] + (bbox.hi[0] - bbox.lo[0]) * k as f64 / samples as f64;
    let mut start = None;
    for k in 0..samples {
        let (x0, x1) = (xs(k), xs(k + 1));
        let (g0, g1) = ((s.sdf)(&[x0, y]), (s.sdf)(&[x1, y]));
        if (g0 > 0.0) != (g1 > 0.0) {
            let (mut lo, mut hi, glo) = (x0, x1, g0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if ((s.sdf)(&[mid, y]) > 0.0) == (glo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            start = project(s, [0.5 * (lo + hi), y]);
            break;
        }
    }
    let start = start.ok_or(Error::BoundaryTrace { nodes: 0 })?;
    let budget = ((20.0 * width / h).ceil() as usize).max(64) * 4;
    let step = 0.9 * h;
    let mut nodes = vec![start];
    let mut travelled = 0.0;
    let mut p = start;
    loop {
        let n = unit(sdf_gradient(s, p));
        let guess = [p[0] - step * n[1], p[1] + step * n[0]];
        let q = project(s, guess).ok_or(Error::BoundaryTrace { nodes: nodes.len() })?;
        travelled += seg_len(p, q);
        if travelled > 2.0 * h && seg_len(q, start) <= step {
            // q is within one step of the start: close the curve here
            if seg_len(p, start) > step {
                nodes.push(q);
            }
            break;
        }
        nodes.push(q);
        if nodes.len() > budget {
            return Err(Error::BoundaryTrace { nodes: nodes.len() });
        }
        p = q;
    }
    let normals = nodes.iter().map(|&x| unit(sdf_gradient(s, x))).collect();
    let weights = trapezoid_weights(&nodes, true);
    let mut mesh = BoundaryMesh::empty();
    mesh.push_piece(nodes, normals, weights, true);
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::neighborhood;
    use std::f64::consts::PI;

    fn check_outward(set: &TargetSet, mesh: &BoundaryMesh) {
        let d = 1e-4;
        for (x, n) in mesh.nodes().iter().zip(mesh.normals()) {
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-10);
            assert!(!set.contains(&[x[0] + d * n[0], x[1] + d * n[1]]));
            assert!(set.contains(&[x[0] - d * n[0], x[1] - d * n[1]]));
        }
    }

    #[test]
    fn unit_disk_length() {
        let set = TargetSet::ball(&[0.0, 0.0], 1.0).unwrap();
        let mesh = boundary_mesh(&set, 0.01).unwrap();
        assert!((mesh.total_weight() - 2.0 * PI).abs() < 1e-3);
        assert!((mesh.total_weight() - mesh.polyline_length()).abs() < 1e-10);
        check_outward(&set, &mesh);
    }

    #[test]
    fn unit_square_perimeter_exact() {
        let set = TargetSet::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap();
        let mesh = boundary_mesh(&set, 0.1).unwrap();
        assert!((mesh.total_weight() - 4.0).abs() < 1e-12);
        for n in mesh.normals() {
            assert!(n[0] == 0.0 || n[1] == 0.0);
        }
        for w in mesh.nodes().windows(2) {
            assert!(seg_len(w[0], w[1]) <= 0.1 + 1e-12);
        }
    }

    #[test]
    fn union_keeps_exposed_arcs() {
        let set = TargetSet::ball_union(vec![
            Ball { center: vec![0.0, 0.0], radius: 1.0 },
            Ball { center: vec![1.0, 0.0], radius: 1.0 },
        ])
        .unwrap();
        let mesh = boundary_mesh(&set, 0.005).unwrap();
        // each circle keeps an arc of angle 2π − 2π/3
        let exact = 2.0 * (2.0 * PI - 2.0 * PI / 3.0);
        assert!((mesh.total_weight() - exact).abs() < 0.02);
        check_outward(&set, &mesh);
        assert!(!mesh.self_intersects());
    }

    #[test]
    fn inflated_square_is_traced() {
        let sq = TargetSet::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap();
        let set = neighborhood(&sq, 0.2).unwrap();
        let mesh = boundary_mesh(&set, 0.02).unwrap();
        let exact = 4.0 + 2.0 * PI * 0.2;
        assert!((mesh.total_weight() - exact).abs() < 1e-3, "{}", mesh.total_weight());
        for x in mesh.nodes() {
            assert!(set.signed_distance(x).abs() <= 1e-10);
        }
        check_outward(&set, &mesh);
        assert!(!mesh.self_intersects());
    }

    #[test]
    fn rebuilt_normals_match_radial() {
        let set = TargetSet::ball(&[0.0, 0.0], 1.0).unwrap();
        let mesh = boundary_mesh(&set, 0.01).unwrap();
        let rebuilt = mesh.with_nodes(mesh.nodes().to_vec()).unwrap();
        for (a, b) in mesh.normals().iter().zip(rebuilt.normals()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_crossing() {
        let mesh = BoundaryMesh::from_polylines(vec![(
            vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]],
            true,
        )]);
        assert!(mesh.self_intersects());
    }
}
