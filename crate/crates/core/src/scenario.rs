//! Scenario registry and the TOML configuration schema.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controls::{ControlAffineField, ControlSet};
use crate::error::{Error, Result};
use crate::flows::ControlledField;
use crate::geom::BoxRegion;
use crate::measures::{AnalyticDensity, Ball, Measure, ParticleMeasure, TargetSet};
use crate::optimizer::{Problem, SweepConfig};
use crate::quadrature::QuadratureConfig;

pub const BUILTIN: [&str; 4] = ["p_prime", "uncertain_ode", "flock", "beam2d"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    pub dynamics: DynamicsConfig,
    pub control: ControlConfig,
    pub initial: InitialConfig,
    pub target: TargetConfig,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    /// translation | rotation | pendulum | flock | double_integrator | linear | zero
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    /// Row-major state matrix of a linear field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    /// Row-major input matrix of a linear field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    /// ball | box | finite
    pub set: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    pub cells: usize,
    /// Boundary directions of a planar ball in the candidate grid.
    #[serde(default = "default_directions")]
    pub directions: usize,
}

fn default_directions() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// dirac | particles | cloud | bump | uniform_box
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    /// Particles of a seeded uniform cloud.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    /// balls | box | polygon
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub horizon: f64,
    pub step: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default = "default_mesh_h")]
    pub mesh_h: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
}

fn default_quad_tol() -> f64 {
    1e-6
}

fn default_mesh_h() -> f64 {
    0.01
}

fn default_max_iters() -> usize {
    20
}

fn default_residual_tol() -> f64 {
    1e-2
}

fn field_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn need<'a, T>(v: &'a Option<T>, path: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| field_err(path, "missing"))
}

fn positive(v: f64, path: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(field_err(path, format!("must be positive, got {v}")))
    }
}

fn with_len<'a>(v: &'a [f64], n: usize, path: &str) -> Result<&'a [f64]> {
    if v.len() == n {
        Ok(v)
    } else {
        Err(field_err(path, format!("expected {n} entries, got {}", v.len())))
    }
}

/// `ẋ = v, v̇ = u`.
pub fn double_integrator() -> ControlAffineField {
    ControlAffineField {
        state_dim: 2,
        control_dim: 1,
        drift: Arc::new(|_t: f64, x: &[f64], out: &mut [f64]| {
            out[0] = x[1];
            out[1] = 0.0;
        }),
        terms: vec![(
            Arc::new(|_t: f64, _x: &[f64], out: &mut [f64]| {
                out[0] = 0.0;
                out[1] = 1.0;
            }),
            Arc::new(|_t: f64, u: &[f64]| u[0]),
        )],
        lipschitz: Some(1.0),
        growth: Some(1.0),
        label: "double_integrator".into(),
    }
}

/// Damped pendulum with torque `u`.
pub fn pendulum(damping: f64) -> ControlledField {
    let c = damping;
    ControlledField::new(
        "pendulum",
        2,
        1,
        Arc::new(move |_t: f64, x: &[f64], u: &[f64], out: &mut [f64]| {
            out[0] = x[1];
            out[1] = -x[0].sin() - c * x[1] + u[0];
        }),
    )
    .with_jacobian(Arc::new(move |_t: f64, x: &[f64], _u: &[f64], out: &mut [f64]| {
        out[0] = 0.0;
        out[1] = 1.0;
        out[2] = -x[0].cos();
        out[3] = -c;
    }))
    .with_lipschitz((2.0 + c * c).sqrt())
    .with_growth(2.0 + c)
    .with_smoothness(true)
}

/// Flock pushed away from the dog at `u`: `e^{−|x−u|}(x − u)`.
pub fn flock() -> ControlledField {
    ControlledField::new(
        "flock",
        2,
        2,
        Arc::new(|_t: f64, x: &[f64], u: &[f64], out: &mut [f64]| {
            let z = [x[0] - u[0], x[1] - u[1]];
            let s = (-(z[0] * z[0] + z[1] * z[1]).sqrt()).exp();
            out[0] = s * z[0];
            out[1] = s * z[1];
        }),
    )
    .with_jacobian(Arc::new(|_t: f64, x: &[f64], u: &[f64], out: &mut [f64]| {
        let z = [x[0] - u[0], x[1] - u[1]];
        let r = (z[0] * z[0] + z[1] * z[1]).sqrt();
        let s = (-r).exp();
        let k = if r > 0.0 { s / r } else { 0.0 };
        out[0] = s - k * z[0] * z[0];
        out[1] = -k * z[0] * z[1];
        out[2] = -k * z[1] * z[0];
        out[3] = s - k * z[1] * z[1];
    }))
    .with_lipschitz(1.0)
    .with_growth(1.0)
    .with_smoothness(true)
}

impl ScenarioConfig {
    pub fn builtin(name: &str) -> Result<Self> {
        let solver = |horizon: f64, step: f64, quad_tol: f64| SolverConfig {
            horizon,
            step,
            quad_tol,
            mesh_h: default_mesh_h(),
            max_iters: default_max_iters(),
            residual_tol: default_residual_tol(),
        };
        let dynamics = |kind: &str| DynamicsConfig {
            kind: kind.into(),
            damping: None,
            a: None,
            b: None,
            lipschitz: None,
        };
        let empty_initial = |kind: &str| InitialConfig {
            kind: kind.into(),
            point: None,
            file: None,
            center: None,
            radius: None,
            lo: None,
            hi: None,
            count: None,
        };
        let ball_target = |c: Vec<f64>, r: f64| TargetConfig {
            kind: "balls".into(),
            centers: Some(vec![c]),
            radii: Some(vec![r]),
            lo: None,
            hi: None,
            vertices: None,
        };
        let boxed = |lo: Vec<f64>, hi: Vec<f64>, cells: usize| ControlConfig {
            set: "box".into(),
            center: None,
            radius: None,
            lo: Some(lo),
            hi: Some(hi),
            points: None,
            cells,
            directions: default_directions(),
        };
        Ok(match name {
            "p_prime" => ScenarioConfig {
                scenario: name.into(),
                seed: 0,
                dynamics: dynamics("translation"),
                control: ControlConfig {
                    set: "ball".into(),
                    center: Some(vec![0.0, 0.0]),
                    radius: Some(1.0),
                    lo: None,
                    hi: None,
                    points: None,
                    cells: 1,
                    directions: 16,
                },
                initial: InitialConfig {
                    point: Some(vec![-2.0, 0.0]),
                    ..empty_initial("dirac")
                },
                target: ball_target(vec![0.0, 0.0], 1.0),
                solver: solver(1.0, 1.0 / 64.0, 1e-6),
            },
            "uncertain_ode" => ScenarioConfig {
                scenario: name.into(),
                seed: 0,
                dynamics: DynamicsConfig {
                    damping: Some(0.1),
                    ..dynamics("pendulum")
                },
                control: boxed(vec![-1.0], vec![1.0], 2),
                initial: InitialConfig {
                    center: Some(vec![1.0, 0.0]),
                    radius: Some(0.5),
                    ..empty_initial("bump")
                },
                target: ball_target(vec![-0.5, -0.5], 0.5),
                solver: solver(2.0, 0.02, 1e-5),
            },
            "flock" => ScenarioConfig {
                scenario: name.into(),
                seed: 0,
                dynamics: dynamics("flock"),
                control: boxed(vec![-0.5, -1.5], vec![0.5, -0.5], 2),
                initial: InitialConfig {
                    center: Some(vec![0.0, 0.0]),
                    radius: Some(0.4),
                    ..empty_initial("bump")
                },
                target: ball_target(vec![0.3, 0.7], 0.4),
                solver: solver(2.0, 0.05, 1e-4),
            },
            "beam2d" => ScenarioConfig {
                scenario: name.into(),
                seed: 0,
                dynamics: dynamics("double_integrator"),
                control: boxed(vec![-1.0], vec![1.0], 2),
                initial: InitialConfig {
                    lo: Some(vec![-1.0, 0.2]),
                    hi: Some(vec![-0.6, 0.6]),
                    count: Some(64),
                    ..empty_initial("cloud")
                },
                target: TargetConfig {
                    kind: "box".into(),
                    centers: None,
                    radii: None,
                    lo: Some(vec![-0.3, -0.3]),
                    hi: Some(vec![0.3, 0.3]),
                    vertices: None,
                },
                solver: solver(2.0, 0.02, 1e-5),
            },
            "custom" => return Err(Error::Config("scenario 'custom' needs a config file".into())),
            other => return Err(Error::Config(format!("unknown scenario '{other}'"))),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Built-in name or path to a TOML file.
    pub fn load(spec: &str) -> Result<(Self, PathBuf)> {
        if BUILTIN.contains(&spec) || spec == "custom" {
            return Ok((Self::builtin(spec)?, PathBuf::from(".")));
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{spec}: {e}")))?;
        let cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{spec}: {m}")),
            e => e,
        })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok((cfg, dir))
    }

    pub fn validate(&self) -> Result<()> {
        if !BUILTIN.contains(&self.scenario.as_str()) && self.scenario != "custom" {
            return Err(field_err("scenario", format!("unknown scenario '{}'", self.scenario)));
        }
        let s = &self.solver;
        positive(s.horizon, "solver.horizon")?;
        positive(s.step, "solver.step")?;
        positive(s.quad_tol, "solver.quad_tol")?;
        positive(s.mesh_h, "solver.mesh_h")?;
        positive(s.residual_tol, "solver.residual_tol")?;
        if s.step > s.horizon {
            return Err(field_err("solver.step", "exceeds the horizon"));
        }
        if self.control.cells == 0 {
            return Err(field_err("control.cells", "must be at least 1"));
        }
        if let Some(l) = self.dynamics.lipschitz {
            if !(l >= 0.0) {
                return Err(field_err("dynamics.lipschitz", "must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn field(&self) -> Result<ControlledField> {
        let d = &self.dynamics;
        let m = self.control_set()?.dim();
        let field = match d.kind.as_str() {
            "translation" => ControlledField::translation(m),
            "rotation" => ControlledField::rotation(),
            "pendulum" => pendulum(d.damping.unwrap_or(0.1)),
            "flock" => flock(),
            "double_integrator" => double_integrator().to_field(),
            "linear" | "zero" => {
                let n = self.state_dim()?;
                let a = d.a.clone().unwrap_or_else(|| vec![0.0; n * n]);
                let b = d.b.clone().unwrap_or_else(|| vec![0.0; n * m]);
                if d.kind == "zero" && (d.a.is_some() || d.b.is_some()) {
                    return Err(field_err("dynamics", "the zero field takes no matrices"));
                }
                ControlledField::linear(n, m, a, b).map_err(|e| field_err("dynamics", e))?
            }
            other => return Err(field_err("dynamics.kind", format!("unknown field '{other}'"))),
        };
        Ok(match d.lipschitz {
            Some(l) => field.with_lipschitz(l),
            None => field,
        })
    }

    fn state_dim(&self) -> Result<usize> {
        let i = &self.initial;
        let from = i
            .point
            .as_ref()
            .or(i.center.as_ref())
            .or(i.lo.as_ref())
            .map(Vec::len)
            .or_else(|| self.target.centers.as_ref().and_then(|c| c.first()).map(Vec::len))
            .or_else(|| self.target.lo.as_ref().map(Vec::len));
        from.ok_or_else(|| field_err("initial", "cannot infer the state dimension"))
    }

    pub fn control_set(&self) -> Result<ControlSet> {
        let c = &self.control;
        let set = match c.set.as_str() {
            "ball" => ControlSet::Ball {
                center: need(&c.center, "control.center")?.clone(),
                radius: positive(*need(&c.radius, "control.radius")?, "control.radius")?,
            },
            "box" => ControlSet::Box {
                lo: need(&c.lo, "control.lo")?.clone(),
                hi: need(&c.hi, "control.hi")?.clone(),
            },
            "finite" => ControlSet::Finite(need(&c.points, "control.points")?.clone()),
            other => return Err(field_err("control.set", format!("unknown control set '{other}'"))),
        };
        set.validate().map_err(|e| field_err("control", e))?;
        Ok(set)
    }

    pub fn u_grid(&self) -> Result<Vec<Vec<f64>>> {
        Ok(self.control_set()?.grid(self.control.directions))
    }

    pub fn initial_measure(&self, base_dir: &Path) -> Result<Measure> {
        let i = &self.initial;
        Ok(match i.kind.as_str() {
            "dirac" => ParticleMeasure::dirac(need(&i.point, "initial.point")?).into(),
            "particles" => {
                let file = need(&i.file, "initial.file")?;
                let path = if file.is_absolute() { file.clone() } else { base_dir.join(file) };
                if !path.exists() {
                    return Err(field_err("initial.file", format!("{} does not exist", path.display())));
                }
                crate::io::read_particles(&path)?.into()
            }
            "cloud" => {
                let lo = need(&i.lo, "initial.lo")?;
                let hi = with_len(need(&i.hi, "initial.hi")?, lo.len(), "initial.hi")?;
                let count = *need(&i.count, "initial.count")?;
                if count == 0 {
                    return Err(field_err("initial.count", "must be at least 1"));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                ParticleMeasure::sample_box(&BoxRegion::new(lo.clone(), hi.to_vec()), count, &mut rng).into()
            }
            "bump" => {
                let r = positive(*need(&i.radius, "initial.radius")?, "initial.radius")?;
                AnalyticDensity::bump(need(&i.center, "initial.center")?, r)?.into()
            }
            "uniform_box" => {
                let lo = need(&i.lo, "initial.lo")?;
                let hi = with_len(need(&i.hi, "initial.hi")?, lo.len(), "initial.hi")?;
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(field_err("initial.hi", "must exceed initial.lo"));
                }
                AnalyticDensity::uniform_box(BoxRegion::new(lo.clone(), hi.to_vec())).into()
            }
            other => return Err(field_err("initial.kind", format!("unknown initial measure '{other}'"))),
        })
    }

    pub fn target_set(&self) -> Result<TargetSet> {
        let t = &self.target;
        match t.kind.as_str() {
            "balls" => {
                let centers = need(&t.centers, "target.centers")?;
                let radii = need(&t.radii, "target.radii")?;
                if centers.len() != radii.len() || centers.is_empty() {
                    return Err(field_err("target.radii", "need one radius per center"));
                }
                let balls = centers
                    .iter()
                    .zip(radii)
                    .map(|(c, &r)| Ball { center: c.clone(), radius: r })
                    .collect();
                TargetSet::ball_union(balls).map_err(|e| field_err("target", e))
            }
            "box" => {
                let lo = with_len(need(&t.lo, "target.lo")?, 2, "target.lo")?;
                let hi = with_len(need(&t.hi, "target.hi")?, 2, "target.hi")?;
                TargetSet::rectangle([lo[0], lo[1]], [hi[0], hi[1]]).map_err(|e| field_err("target", e))
            }
            "polygon" => TargetSet::polygon(need(&t.vertices, "target.vertices")?.clone()).map_err(|e| field_err("target", e)),
            other => Err(field_err("target.kind", format!("unknown target '{other}'"))),
        }
    }

    pub fn problem(&self, base_dir: &Path) -> Result<Problem> {
        self.validate()?;
        let s = &self.solver;
        let problem = Problem {
            field: self.field()?,
            set: self.control_set()?,
            theta: self.initial_measure(base_dir)?,
            target: self.target_set()?,
            horizon: s.horizon,
            cells: self.control.cells,
            step: s.step,
            quad: QuadratureConfig::default().with_tol(s.quad_tol),
            mesh_h: s.mesh_h,
        };
        problem.validate().map_err(|e| match e {
            Error::DimensionMismatch { expected, got } => {
                field_err("initial/target/control", format!("dimension mismatch: expected {expected}, got {got}"))
            }
            e => e,
        })?;
        Ok(problem)
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            max_iters: self.solver.max_iters,
            tol: self.solver.residual_tol,
        }
    }
}
