//! Property tests for the invariants of each module.

use proptest::prelude::*;

use ctmass::controls::{chattering, needle_variation, Atom, ControlSet, GeneralizedControl, PiecewiseControl};
use ctmass::flows::ClosedField;
use ctmass::geom::dist;
use ctmass::measures::{mollify, prohorov_upper, pushforward, AnalyticDensity, ParticleMeasure, TargetSet};
use ctmass::optimizer::{exhaustive, Problem};
use ctmass::quadrature::QuadratureConfig;
use ctmass::scenario::{pendulum, ScenarioConfig, BUILTIN};
use ctmass::transport::push_particles;

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 2)
}

fn particles(max: usize) -> impl Strategy<Value = ParticleMeasure> {
    prop::collection::vec((point(), 0.1..1.0f64), 1..max).prop_map(|pts| {
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let points: Vec<Vec<f64>> = pts.iter().map(|p| p.0.clone()).collect();
        let weights = pts.iter().map(|p| p.1 / total).collect();
        ParticleMeasure::new(&points, weights).unwrap()
    })
}

fn piecewise(cells: usize) -> impl Strategy<Value = PiecewiseControl> {
    prop::collection::vec(-1.0..1.0f64, cells).prop_map(|vs| PiecewiseControl::uniform(2.0, vs.into_iter().map(|v| vec![v]).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prohorov_is_a_bounded_symmetric_estimate(a in particles(6), b in particles(6)) {
        prop_assert_eq!(prohorov_upper(&a, &a).unwrap(), 0.0);
        let ab = prohorov_upper(&a, &b).unwrap();
        let ba = prohorov_upper(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn pushforward_keeps_weights(theta in particles(20), shift in point()) {
        let moved = pushforward(&theta, |x| vec![x[0] + shift[0], x[1] * 2.0 + shift[1]]).unwrap();
        prop_assert_eq!(moved.weights(), theta.weights());
    }

    #[test]
    fn mollified_mass_is_one(theta in particles(4), eps in 0.05..0.5f64) {
        let rho = mollify(&theta, eps).unwrap();
        let mass = rho.total_mass(&QuadratureConfig::default().with_tol(1e-7)).unwrap();
        prop_assert!((mass - 1.0).abs() <= 1e-5, "{}", mass);
    }

    #[test]
    fn needles_stay_admissible(
        ubar in piecewise(4),
        tau in 0.05..2.0f64,
        frac in 0.0..1.0f64,
        omega in -1.0..1.0f64,
        probe in 0.0..2.0f64,
    ) {
        let set = ControlSet::interval(-1.0, 1.0).unwrap();
        let eps = frac * tau;
        let needle = needle_variation(&ubar, &set, tau, eps, &[omega]).unwrap();
        prop_assert!(needle.check_in(&set).is_ok());
        prop_assert_eq!(needle.horizon(), ubar.horizon());
        let expected = if probe > tau - eps && probe < tau { omega } else { ubar.value_at(probe).unwrap()[0] };
        // breakpoints may belong to either side
        let on_edge = needle.grid().iter().chain(ubar.grid()).any(|g| (g - probe).abs() < 1e-12);
        if !on_edge {
            prop_assert_eq!(needle.value_at(probe).unwrap()[0], expected);
        }
    }

    #[test]
    fn chattering_honours_atom_weights(p in 0.05..0.95f64, periods in 1usize..12) {
        let atoms = vec![Atom { omega: vec![1.0], p }, Atom { omega: vec![-1.0], p: 1.0 - p }];
        let nu = GeneralizedControl::constant(2.0, 2, atoms).unwrap();
        let u = chattering(&nu, 1.0 / periods as f64).unwrap();
        let time_at_one: f64 = u.values().iter().zip(u.grid().windows(2)).filter(|(v, _)| v[0] == 1.0).map(|(_, w)| w[1] - w[0]).sum();
        prop_assert!((time_at_one - 2.0 * p).abs() <= 1e-9, "{}", time_at_one);
    }

    #[test]
    fn pendulum_flow_is_invertible_and_composes(
        u in piecewise(3),
        x in point(),
        t in 0.0..2.0f64,
        m in 0.0..2.0f64,
        s in 0.0..2.0f64,
    ) {
        let field = ClosedField::piecewise(pendulum(0.1), &u, 1e-3).unwrap();
        let y = field.flow(t, s, &x).unwrap();
        let back = field.flow(s, t, &y).unwrap();
        prop_assert!(dist(&back, &x) <= 1e-8, "{:?} vs {:?}", back, x);
        let via = field.flow(m, s, &field.flow(t, m, &x).unwrap()).unwrap();
        prop_assert!(dist(&via, &y) <= 1e-8, "{:?} vs {:?}", via, y);
    }

    #[test]
    fn exhaustive_best_dominates_its_table(theta in particles(12), cells in 1usize..3) {
        let problem = Problem {
            theta: theta.into(),
            ..ScenarioConfig::builtin("p_prime").unwrap().problem(std::path::Path::new(".")).unwrap()
        };
        let grid = problem.set.grid(6);
        let ex = exhaustive(&problem, &grid, cells).unwrap();
        prop_assert_eq!(ex.table.len(), grid.len().pow(cells as u32));
        prop_assert!(ex.table.iter().all(|row| row.value <= ex.value));
        let first = ex.table.iter().position(|row| row.value == ex.value).unwrap();
        prop_assert_eq!(&ex.table[first].index, &ex.best_index);
    }

    #[test]
    fn terminal_mass_stays_in_unit_interval(theta in particles(12), c in point(), r in 0.1..2.0f64) {
        let target = TargetSet::ball(&c, r).unwrap();
        let m = ctmass::measures::mass_in(&theta.into(), &target).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn builtin_configs_round_trip(which in 0..BUILTIN.len(), seed in any::<u64>()) {
        let mut cfg = ScenarioConfig::builtin(BUILTIN[which]).unwrap();
        cfg.seed = seed;
        let back = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn close_measures_stay_close(theta in particles(8), shift in 0.0..0.05f64, u in piecewise(2)) {
        let moved = pushforward(&theta, |x| vec![x[0] + shift, x[1]]).unwrap();
        let eps = prohorov_upper(&theta, &moved).unwrap();
        let field = ClosedField::piecewise(pendulum(0.1), &u, 1e-2).unwrap();
        let a = push_particles(&theta, &field, 0.0, 2.0).unwrap();
        let b = push_particles(&moved, &field, 0.0, 2.0).unwrap();
        let l = pendulum(0.1).declared_lipschitz().unwrap();
        let r = (l * 2.0f64).exp().max(1.0);
        prop_assert!(prohorov_upper(&a, &b).unwrap() <= r * eps * 1.1 + 1e-12);
    }

    #[test]
    fn density_mass_is_conserved_by_sampling(seed in any::<u64>()) {
        use rand::SeedableRng;
        let rho = AnalyticDensity::bump(&[0.2, -0.1], 0.4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sample = rho.sample(500, &mut rng).unwrap();
        prop_assert!((sample.total_weight() - 1.0).abs() <= 1e-12);
        prop_assert!(sample.points().all(|p| dist(p, &[0.2, -0.1]) <= 0.4));
    }
}
