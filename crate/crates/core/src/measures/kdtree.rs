//! Weighted k-d tree answering ball-mass queries.

use crate::geom::dist;

const LEAF_SIZE: usize = 16;

struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    start: usize,
    end: usize,
    mass: f64,
    children: Option<(usize, usize)>,
}

pub(crate) struct KdTree<'a> {
    dim: usize,
    points: &'a [f64],
    weights: &'a [f64],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub(crate) fn new(dim: usize, points: &'a [f64], weights: &'a [f64]) -> Self {
        let mut tree = KdTree {
            dim,
            points,
            weights,
            order: (0..weights.len()).collect(),
            nodes: Vec::new(),
        };
        if !weights.is_empty() {
            tree.build(0, weights.len());
        }
        tree
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let dim = self.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut mass = 0.0;
        for &i in &self.order[start..end] {
            let p = &self.points[i * dim..(i + 1) * dim];
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
            mass += self.weights[i];
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo: lo.clone(),
            hi: hi.clone(),
            start,
            end,
            mass,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let axis = (0..dim)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            let mid = start + (end - start) / 2;
            let points = self.points;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                points[a * dim + axis]
                    .total_cmp(&points[b * dim + axis])
                    .then(a.cmp(&b))
            });
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.nodes[id].children = Some((left, right));
        }
        id
    }

    fn box_distances(&self, node: &Node, c: &[f64]) -> (f64, f64) {
        let mut near = 0.0;
        let mut far = 0.0;
        for k in 0..self.dim {
            let below = node.lo[k] - c[k];
            let above = c[k] - node.hi[k];
            let gap = below.max(above).max(0.0);
            near += gap * gap;
            let span = (c[k] - node.lo[k]).abs().max((node.hi[k] - c[k]).abs());
            far += span * span;
        }
        (near.sqrt(), far.sqrt())
    }

    /// Mass of points with `|p − c| < r` (strict) or `≤ r` (closed).
    pub(crate) fn ball_mass(&self, c: &[f64], r: f64, strict: bool) -> f64 {
        if self.nodes.is_empty() || r < 0.0 || (strict && r == 0.0) {
            return 0.0;
        }
        let margin = 1e-12 * (1.0 + r);
        let mut total = 0.0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let (near, far) = self.box_distances(node, c);
            if near > r + margin {
                continue;
            }
            if far < r - margin {
                total += node.mass;
                continue;
            }
            match node.children {
                Some((l, rr)) => {
                    stack.push(rr);
                    stack.push(l);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let d = dist(self.point(i), c);
                        if d < r || (!strict && d == r) {
                            total += self.weights[i];
                        }
                    }
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 500;
        let pts: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = vec![1.0 / n as f64; n];
        let tree = KdTree::new(2, &pts, &w);
        for _ in 0..50 {
            let c = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let r = rng.gen_range(0.0..1.5);
            let brute: f64 = (0..n)
                .filter(|&i| dist(&pts[2 * i..2 * i + 2], &c) < r)
                .map(|i| w[i])
                .sum();
            assert!((tree.ball_mass(&c, r, true) - brute).abs() < 1e-12);
        }
        // closed ball picks up the point on the sphere
        let c = [pts[0], pts[1]];
        assert!(tree.ball_mass(&c, 0.0, false) >= w[0]);
        assert_eq!(tree.ball_mass(&c, 0.0, true), 0.0);
    }
}
