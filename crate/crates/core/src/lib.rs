//! Optimal steering of probability mass along a controlled continuity equation.
//!
//! The crate transports measures along the characteristics of a controlled
//! vector field `v(t, x, u)` and provides tools to maximize the terminal mass
//! `μ(T)(A)` that lands in a target set `A`:
//!
//! - [`measures`]: particle measures, analytic densities, mollification,
//!   target sets, boundary meshes, Prohorov-distance estimates.
//! - [`flows`]: controlled fields, their flows and flow Jacobians.
//! - [`controls`]: usual and generalized (Young-measure) controls, needle
//!   variations, chattering, Filippov extraction.
//! - [`transport`]: trajectories of the continuity equation and the objective.
//! - [`optimality`]: backward target tubes, boundary outflow and the
//!   necessary-condition residual.
//! - [`optimizer`]: exhaustive oracle, outflow sweep, mollified problems and
//!   the stability experiment.
//! - [`scenario`] and [`commands`]: the scenario registry, configuration and
//!   the command surface used by the `ctmass` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod commands;
pub mod controls;
pub mod error;
pub mod flows;
pub mod geom;
pub mod io;
pub mod measures;
pub mod optimality;
pub mod optimizer;
pub mod quadrature;
pub mod scenario;
pub mod transport;

pub use error::{Error, Hypothesis, Result};
