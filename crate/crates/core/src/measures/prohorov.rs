//! Upper estimate of the Prohorov distance over particle-centered balls.
//!
//! For every center `c` taken from either support and every radius `ρ` at
//! which a one-sided mass changes, both inequalities
//! `θ₁(B̄(c,ρ)) ≤ θ₂(B(c,ρ+ε)) + ε` and the symmetric one are checked. The
//! returned ε is the smallest value on a fixed geometric grid for which all
//! of them hold; feasibility is monotone in ε so the grid is bisected. At
//! ε = 0 the open inflation degenerates and closed balls are compared.

use super::kdtree::KdTree;
use super::ParticleMeasure;
use crate::error::{Error, Result};
use crate::geom::dist;

const GRID_FLOOR: f64 = 1e-6;
const GRID_FACTOR: f64 = 1.05;
const SLACK: f64 = 1e-12;
const SMALL_SIDE: usize = 64;

/// The ε grid: `0`, then `1e−6 · 1.05^k` below 1, then `1`.
pub fn prohorov_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    let mut e = GRID_FLOOR;
    while e < 1.0 {
        grid.push(e);
        e *= GRID_FACTOR;
    }
    grid.push(1.0);
    grid
}

pub fn prohorov_upper(theta1: &ParticleMeasure, theta2: &ParticleMeasure) -> Result<f64> {
    if theta1.is_empty() || theta2.is_empty() {
        return Err(Error::InvalidArgument("Prohorov estimate needs nonempty measures".into()));
    }
    if theta1.dim() != theta2.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta1.dim(),
            got: theta2.dim(),
        });
    }
    let checker = Checker::new(theta1, theta2);
    let grid = prohorov_grid();
    if checker.feasible(grid[0]) {
        return Ok(0.0);
    }
    // grid[l] infeasible, grid[hi] feasible (ε = 1 always is)
    let (mut l, mut hi) = (0usize, grid.len() - 1);
    while hi - l > 1 {
        let mid = l + (hi - l) / 2;
        if checker.feasible(grid[mid]) {
            hi = mid;
        } else {
            l = mid;
        }
    }
    Ok(grid[hi])
}

struct Checker<'a> {
    a: &'a ParticleMeasure,
    b: &'a ParticleMeasure,
    strategy: Strategy<'a>,
}

enum Strategy<'a> {
    /// `small` has few atoms; ball masses of `big` come from a k-d tree.
    SmallLarge {
        small_is_a: bool,
        tree: KdTree<'a>,
    },
    Merge,
}

impl<'a> Checker<'a> {
    fn new(a: &'a ParticleMeasure, b: &'a ParticleMeasure) -> Self {
        let (small, big, small_is_a) = if a.len() <= b.len() { (a, b, true) } else { (b, a, false) };
        let strategy = if small.len() <= SMALL_SIDE && big.len() > 4 * SMALL_SIDE {
            Strategy::SmallLarge {
                small_is_a,
                tree: KdTree::new(big.dim(), big.flat_points(), big.weights()),
            }
        } else {
            Strategy::Merge
        };
        Checker { a, b, strategy }
    }

    fn centers(&self) -> impl Iterator<Item = &[f64]> {
        self.a.points().chain(self.b.points())
    }

    fn feasible(&self, eps: f64) -> bool {
        match &self.strategy {
            Strategy::Merge => self.centers().all(|c| {
                let da = sorted_distances(self.a, c);
                let db = sorted_distances(self.b, c);
                one_sided_merge(&da, &db, eps) && one_sided_merge(&db, &da, eps)
            }),
            Strategy::SmallLarge { small_is_a, tree } => {
                let small = if *small_is_a { self.a } else { self.b };
                self.centers().all(|c| small_large(small, tree, c, eps))
            }
        }
    }
}

fn sorted_distances(m: &ParticleMeasure, c: &[f64]) -> Vec<(f64, f64)> {
    let mut d: Vec<(f64, f64)> = m.points().zip(m.weights()).map(|(p, &w)| (dist(p, c), w)).collect();
    d.sort_by(|x, y| x.0.total_cmp(&y.0));
    d
}

/// `lhs(B̄(c,ρ)) ≤ rhs(B(c,ρ+ε)) + ε` at every radius where the left mass jumps.
fn one_sided_merge(lhs: &[(f64, f64)], rhs: &[(f64, f64)], eps: f64) -> bool {
    let mut lhs_mass = 0.0;
    let mut rhs_mass = 0.0;
    let mut j = 0;
    let mut i = 0;
    while i < lhs.len() {
        let rho = lhs[i].0;
        while i < lhs.len() && lhs[i].0 == rho {
            lhs_mass += lhs[i].1;
            i += 1;
        }
        let reach = rho + eps;
        while j < rhs.len() && (rhs[j].0 < reach || (eps == 0.0 && rhs[j].0 == reach)) {
            rhs_mass += rhs[j].1;
            j += 1;
        }
        if lhs_mass > rhs_mass + eps + SLACK {
            return false;
        }
    }
    true
}

fn small_large(small: &ParticleMeasure, tree: &KdTree<'_>, c: &[f64], eps: f64) -> bool {
    let ds = sorted_distances(small, c);
    let closed = eps == 0.0;
    let mut below = 0.0;
    let mut i = 0;
    while i < ds.len() {
        let s = ds[i].0;
        // big → small: radii ρ < s − ε see only the small mass strictly inside s
        let big_open = tree.ball_mass(c, s - eps, true);
        if big_open > below + eps + SLACK {
            return false;
        }
        while i < ds.len() && ds[i].0 == s {
            below += ds[i].1;
            i += 1;
        }
        // small → big at ρ = s
        let big_reach = tree.ball_mass(c, s + eps, !closed);
        if below > big_reach + eps + SLACK {
            return false;
        }
    }
    true
}
