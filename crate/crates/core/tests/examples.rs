//! Worked examples for each module, through the public API.

use std::f64::consts::{E, PI};
use std::path::Path;
use std::sync::Arc;

use ctmass::controls::{
    averaged_field, chattering, filippov_extract, needle_variation, Atom, ControlAffineField, ControlSet, GeneralizedControl,
    PiecewiseControl,
};
use ctmass::flows::{determinant, estimate_constants, ClosedField, ControlledField};
use ctmass::geom::{dist, BoxRegion};
use ctmass::measures::{
    boundary_mesh, mass_in, mollify, neighborhood, prohorov_upper, pushforward, standard_mollifier, Measure, ParticleMeasure,
    TargetSet, TargetShape,
};
use ctmass::optimality::{gate, outflow};
use ctmass::optimizer::{exhaustive, perturb, sweep, PerturbMode, PerturbOptions, Problem, SweepConfig};
use ctmass::scenario::ScenarioConfig;
use ctmass::transport::{objective, solve_particles, ControlRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn p_prime() -> Problem {
    ScenarioConfig::builtin("p_prime").unwrap().problem(Path::new(".")).unwrap()
}

fn theta_only(problem: &Problem, eps: f64) -> Problem {
    let opts = PerturbOptions {
        mode: PerturbMode::ThetaOnly,
        ..Default::default()
    };
    perturb(problem, eps, &opts).unwrap().problem
}

#[test]
fn uniform_particles_split_by_half_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let square = BoxRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]);
    let theta = ParticleMeasure::sample_box(&square, 1_000_000, &mut rng);
    let left = TargetSet::rectangle([-1.0, -1.0], [0.5, 2.0]).unwrap();
    let m = mass_in(&theta.into(), &left).unwrap();
    assert!((m - 0.5).abs() <= 3e-3, "{m}");
}

#[test]
fn disjoint_support_has_no_mass() {
    let theta = ParticleMeasure::dirac(&[5.0, 5.0]);
    let disk = TargetSet::ball(&[0.0, 0.0], 1.0).unwrap();
    assert_eq!(mass_in(&theta.into(), &disk).unwrap(), 0.0);
    let bump = mollify(&ParticleMeasure::dirac(&[5.0, 5.0]), 0.1).unwrap();
    assert_eq!(mass_in(&bump.into(), &disk).unwrap(), 0.0);
}

#[test]
fn mollified_dirac_inside_its_support_ball() {
    let eta = mollify(&ParticleMeasure::dirac(&[0.0, 0.0]), 0.1).unwrap();
    let ball = TargetSet::ball(&[0.0, 0.0], 0.1).unwrap();
    let m = mass_in(&Measure::Density(eta.clone()), &ball).unwrap();
    assert!((m - 1.0).abs() <= 1e-4, "{m}");
    assert!((eta.eval(&[0.03, -0.02]) - standard_mollifier(&[0.03, -0.02], 0.1)).abs() < 1e-12);
}

#[test]
fn mollified_pair_evaluates_half_kernel() {
    let pair = ParticleMeasure::uniform(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
    let rho = mollify(&pair, 0.1).unwrap();
    let expected = 0.5 * standard_mollifier(&[0.0, 0.0], 0.1);
    assert!((rho.eval(&[1.0, 0.0]) - expected).abs() <= 1e-12 * expected);
}

#[test]
fn pushforward_translates_a_dirac() {
    let theta = ParticleMeasure::dirac(&[-2.0, 0.0]);
    let same = pushforward(&theta, |x| x.to_vec()).unwrap();
    assert_eq!(same, theta);
    let moved = pushforward(&theta, |x| vec![x[0] + 1.0, x[1]]).unwrap();
    assert_eq!(moved.point(0), &[-1.0, 0.0]);
    let err = pushforward(&theta, |_| vec![f64::NAN, 0.0]).unwrap_err();
    assert!(err.to_string().contains('0'), "{err}");
}

#[test]
fn prohorov_between_diracs() {
    let a = ParticleMeasure::dirac(&[0.0, 0.0]);
    assert_eq!(prohorov_upper(&a, &a).unwrap(), 0.0);
    let near = prohorov_upper(&a, &ParticleMeasure::dirac(&[0.3, 0.0])).unwrap();
    assert!((0.3..=0.3 * 1.05).contains(&near), "{near}");
    let far = prohorov_upper(&a, &ParticleMeasure::dirac(&[7.0, 0.0])).unwrap();
    assert_eq!(far, 1.0);
}

#[test]
fn neighborhoods_of_ball_and_square() {
    let disk = TargetSet::ball(&[0.0, 0.0], 1.0).unwrap();
    let grown = neighborhood(&disk, 0.5).unwrap();
    match grown.shape() {
        TargetShape::BallUnion(balls) => assert_eq!(balls[0].radius, 1.5),
        other => panic!("unexpected shape {other:?}"),
    }
    assert_eq!(grown.inner_ball_radius(), 1.5);
    let square = TargetSet::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap();
    let same = neighborhood(&square, 0.0).unwrap();
    assert_eq!(same.signed_distance(&[0.3, 0.2]), square.signed_distance(&[0.3, 0.2]));
    let offset = neighborhood(&square, 0.5).unwrap();
    assert!(offset.contains(&[1.4, 0.5]));
    assert!(!offset.contains(&[1.6, 0.5]));
}

#[test]
fn boundary_meshes_have_exact_perimeters() {
    let disk = boundary_mesh(&TargetSet::ball(&[0.0, 0.0], 1.0).unwrap(), 0.01).unwrap();
    assert!((disk.total_weight() - 2.0 * PI).abs() <= 1e-3);
    let square = boundary_mesh(&TargetSet::rectangle([0.0, 0.0], [1.0, 1.0]).unwrap(), 0.1).unwrap();
    assert!((square.total_weight() - 4.0).abs() <= 1e-12);
    for n in square.normals() {
        assert!(n[0] == 0.0 || n[1] == 0.0, "{n:?}");
    }
}

#[test]
fn flows_of_closed_form_fields() {
    let shift = ClosedField::fixed(ControlledField::translation(2), &[1.0, 0.0], 0.125, 1.0).unwrap();
    assert_eq!(shift.flow(0.0, 1.0, &[-2.0, 0.0]).unwrap(), vec![-1.0, 0.0]);

    let rot = ClosedField::fixed(ControlledField::rotation(), &[0.0], 1e-3, 2.0 * PI).unwrap();
    let x = [0.7, -0.4];
    assert!(dist(&rot.flow(0.0, 2.0 * PI, &x).unwrap(), &x) <= 1e-8);
    let (_, m) = rot.flow_jacobian(0.0, PI / 2.0, &x).unwrap();
    assert!((determinant(2, &m) - 1.0).abs() <= 1e-9);
    assert!(m[0].abs() < 1e-9 && (m[1] + 1.0).abs() < 1e-9 && (m[2] - 1.0).abs() < 1e-9);

    let dil = ClosedField::fixed(ControlledField::dilation(2), &[0.0], 1e-3, 1.0).unwrap();
    let (_, m) = dil.flow_jacobian(0.0, 1.0, &x).unwrap();
    assert!((determinant(2, &m) - E * E).abs() <= 1e-6);
}

#[test]
fn estimated_constants_of_linear_fields() {
    let domain = BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0]);
    let us = vec![vec![0.0, 0.0], vec![1.0, -1.0]];
    let c = estimate_constants(&ControlledField::translation(2), &domain, &[0.0], &us).unwrap();
    assert_eq!(c.lipschitz, 0.0);
    let c = estimate_constants(&ControlledField::rotation(), &domain, &[0.0], &[vec![0.0]]).unwrap();
    assert!((c.lipschitz - 1.0).abs() <= 1e-6);
    let three = ControlledField::linear(2, 2, vec![3.0, 0.0, 0.0, 3.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let c = estimate_constants(&three, &domain, &[0.0], &us).unwrap();
    assert!((c.lipschitz - 3.0).abs() <= 1e-6);
}

fn symmetric_atoms() -> Vec<Atom> {
    vec![Atom { omega: vec![1.0], p: 0.5 }, Atom { omega: vec![-1.0], p: 0.5 }]
}

#[test]
fn averaged_fields() {
    let nu = GeneralizedControl::constant(1.0, 1, symmetric_atoms()).unwrap();
    let mean = averaged_field(&ControlledField::translation(1), &nu, 0.01).unwrap();
    assert_eq!(mean.velocity(0.5, &[0.3]).unwrap(), vec![0.0]);

    let square = ControlledField::new("square", 1, 1, Arc::new(|_, _, u, out| out[0] = u[0] * u[0]));
    let relaxed = averaged_field(&square, &nu, 0.01).unwrap();
    assert_eq!(relaxed.velocity(0.5, &[0.3]).unwrap(), vec![1.0]);
    assert_eq!(square.eval(0.5, &[0.3], &[0.0]), vec![0.0]);

    let u = PiecewiseControl::uniform(1.0, vec![vec![0.25], vec![-0.5]]).unwrap();
    let dirac = averaged_field(&square, &GeneralizedControl::from_piecewise(&u), 0.01).unwrap();
    assert_eq!(dirac.velocity(0.75, &[0.0]).unwrap(), vec![0.25]);
}

fn scalar_affine(phi: fn(f64) -> f64) -> ControlAffineField {
    ControlAffineField {
        state_dim: 1,
        control_dim: 1,
        drift: Arc::new(|_, _, out| out[0] = 0.0),
        terms: vec![(Arc::new(|_, _, out: &mut [f64]| out[0] = 1.0), Arc::new(move |_, u: &[f64]| phi(u[0])))],
        lipschitz: Some(0.0),
        growth: Some(1.0),
        label: "scalar".into(),
    }
}

#[test]
fn filippov_extraction_examples() {
    let set = ControlSet::interval(-1.0, 1.0).unwrap();
    let nu = GeneralizedControl::constant(1.0, 2, symmetric_atoms()).unwrap();
    for phi in [(|u| u) as fn(f64) -> f64, |u| u * u * u] {
        let ex = filippov_extract(&scalar_affine(phi), &set, &nu, 60).unwrap();
        for (v, r) in ex.control.values().iter().zip(&ex.residuals) {
            assert!(v[0].abs() <= 1e-6, "{v:?}");
            assert!(*r <= 1e-6, "{r}");
        }
    }
    let single = GeneralizedControl::constant(1.0, 2, vec![Atom { omega: vec![0.4], p: 1.0 }]).unwrap();
    let ex = filippov_extract(&scalar_affine(|u| u), &set, &single, 60).unwrap();
    for v in ex.control.values() {
        assert!((v[0] - 0.4).abs() <= 1e-6, "{v:?}");
    }
}

#[test]
fn needle_variation_examples() {
    let set = ControlSet::unit_ball(2);
    let ubar = PiecewiseControl::constant(1.0, 1, &[1.0, 0.0]).unwrap();
    assert!(needle_variation(&ubar, &set, 0.5, 0.0, &[0.0, 1.0]).unwrap().equal_ae(&ubar));
    assert!(needle_variation(&ubar, &set, 0.5, 0.2, &[1.0, 0.0]).unwrap().equal_ae(&ubar));

    let needle = needle_variation(&ubar, &set, 1.0, 0.25, &[0.0, 1.0]).unwrap();
    assert_eq!(needle.grid(), &[0.0, 0.75, 1.0]);
    let problem = theta_only(&p_prime(), 0.05);
    let base = problem.evaluate(&ubar).unwrap().value;
    let varied = problem.evaluate(&needle).unwrap().value;
    assert!(varied < base, "{varied} vs {base}");

    let inner = needle_variation(&ubar, &set, 0.5, 0.25, &[0.0, 1.0]).unwrap();
    assert_eq!(inner.cells(), 3);
}

#[test]
fn chattering_with_one_atom_is_constant() {
    let nu = GeneralizedControl::constant(1.0, 2, vec![Atom { omega: vec![0.3], p: 1.0 }]).unwrap();
    let u = chattering(&nu, 0.1).unwrap();
    assert!(u.equal_ae(&PiecewiseControl::constant(1.0, 1, &[0.3]).unwrap()));
}

#[test]
fn particle_transport_examples() {
    let theta = ParticleMeasure::uniform(&[vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
    let still = ClosedField::fixed(ControlledField::translation(2), &[0.0, 0.0], 0.1, 1.0).unwrap();
    let traj = solve_particles(&theta, &still, &[0.0, 0.5, 1.0]).unwrap();
    assert!(traj.snapshots().iter().all(|s| s == &theta));

    let dirac = ParticleMeasure::dirac(&[-2.0, 0.0]);
    let shift = ClosedField::fixed(ControlledField::translation(2), &[1.0, 0.0], 0.125, 1.0).unwrap();
    let traj = solve_particles(&dirac, &shift, &[0.0, 1.0]).unwrap();
    assert_eq!(traj.terminal(), &ParticleMeasure::dirac(&[-1.0, 0.0]));
}

#[test]
fn objective_of_the_translation_problem() {
    let p = p_prime();
    let right = p.constant_control(&[1.0, 0.0]).unwrap();
    let rest = p.constant_control(&[0.0, 0.0]).unwrap();
    let value = |u: &PiecewiseControl| objective(&p.theta, ControlRef::Usual(u), &p.field, &p.target, p.step, &p.quad).unwrap().value;
    assert_eq!(value(&right), 1.0);
    assert_eq!(value(&rest), 0.0);
    let mollified = theta_only(&p, 0.05);
    let half = mollified.evaluate(&right).unwrap().value;
    assert!((half - 0.5).abs() <= 0.05, "{half}");
}

#[test]
fn outflow_of_constant_and_linear_densities() {
    let disk = TargetSet::ball(&[0.0, 0.0], 1.0).unwrap();
    let mesh = &boundary_mesh(&disk, 0.01).unwrap();
    let field = ControlledField::translation(2);
    let constant = vec![2.0; mesh.len()];
    assert!(outflow(mesh, &constant, &field, 0.5, &[0.3, -0.8]).abs() <= 1e-8);
    let linear: Vec<f64> = mesh.nodes().iter().map(|x| x[0] + 2.0).collect();
    assert!((outflow(mesh, &linear, &field, 0.5, &[1.0, 0.0]) - PI).abs() <= 1e-4);
    assert_eq!(outflow(mesh, &linear, &field, 0.5, &[0.0, 0.0]), 0.0);
}

#[test]
fn exhaustive_on_the_mollified_translation_problem() {
    let problem = theta_only(&p_prime(), 0.05);
    let grid = problem.default_grid();
    assert_eq!(grid.len(), 17);
    let one = exhaustive(&problem, &grid, 1).unwrap();
    assert!(dist(one.control.values()[0].as_slice(), &[1.0, 0.0]) < 1e-12);
    assert!((one.value - 0.5).abs() <= 0.05, "{}", one.value);
    let two = exhaustive(&problem, &grid, 2).unwrap();
    assert!((two.value - one.value).abs() <= 0.01);
}

#[test]
fn inert_control_keeps_the_first_grid_point() {
    let mut problem = theta_only(&p_prime(), 0.1);
    problem.field = ControlledField::linear(2, 2, vec![0.0; 4], vec![0.0; 4]).unwrap();
    let grid = problem.default_grid();
    let ex = exhaustive(&problem, &grid, 1).unwrap();
    assert_eq!(ex.best_index, vec![0]);
    assert!(ex.table.iter().all(|row| row.value == ex.value));
}

#[test]
fn sweep_returns_a_stationary_control_unchanged() {
    let problem = theta_only(&p_prime(), 0.1);
    let init = problem.constant_control(&[1.0, 0.0]).unwrap();
    let res = sweep(&problem, &init, &problem.default_grid(), &SweepConfig::default()).unwrap();
    assert_eq!(res.control, init);
    assert_eq!(res.trace.len(), 1);
}

#[test]
fn perturbation_constants() {
    let base = p_prime();
    let full = PerturbOptions {
        mode: PerturbMode::Full,
        ..Default::default()
    };
    let pp = perturb(&base, 0.05, &full).unwrap();
    assert_eq!(pp.r, 1.0);
    match pp.problem.target.shape() {
        TargetShape::BallUnion(balls) => assert_eq!(balls[0].radius, 1.05),
        other => panic!("unexpected shape {other:?}"),
    }
    gate(&pp.problem.theta, &pp.problem.target, &pp.problem.field).unwrap();

    let mut rotating = base.clone();
    rotating.field = ControlledField::linear(2, 2, vec![0.0, -1.0, 1.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let pp = perturb(&rotating, 0.05, &full).unwrap();
    assert!((pp.r - E).abs() < 1e-12);
}
