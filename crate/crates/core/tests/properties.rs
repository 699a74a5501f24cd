use std::sync::Arc;

use proptest::prelude::*;

use yaf_core::config::{parse_scenario, scenario_to_toml};
use yaf_core::exhaustion::{exhaustion_study, ExhaustionPlan};
use yaf_core::flow::{
    bracket_report, evolve, linearization_check, maximum_principle_bracket, sup_abs_curvature, Boundary, FlowState,
    Form, InnerBoundary, OuterBoundary, SnapshotPlan, SolverConfig,
};
use yaf_core::geometry::{adm_mass, scalar_curvature, weighted_sup_norm};
use yaf_core::maxprinciple::{admissible_eta, beta_lower_bound, h_weight, induction_cover, theta_constant};
use yaf_core::observables::{convergence_monitor, mass_drift, ConvergenceTolerances};
use yaf_core::scenario::{GridSpec, Scenario, ScenarioKind, Spacing};
use yaf_core::{ConformalField, Constants, RadialGrid};

fn form() -> impl Strategy<Value = Form> {
    prop_oneof![Just(Form::U), Just(Form::W)]
}

fn run(v0: ConformalField, form: Form, dt: f64, t_end: f64, snaps: usize) -> yaf_core::flow::FlowTrajectory {
    let cfg = SolverConfig::new(dt, Boundary::from_initial(&v0)).with_form(form);
    let state = FlowState::new(v0, 0.0, form.time_tag()).unwrap();
    evolve(state, &cfg, t_end, &SnapshotPlan::Equispaced(snaps), &mut []).unwrap()
}

fn bump_field(n: usize, amplitude: f64, width: f64, r_outer: f64, nodes: usize) -> ConformalField {
    let g = Arc::new(RadialGrid::geometric(n, 0.0, r_outer, nodes, 1.03).unwrap());
    let kind = ScenarioKind::Bump {
        amplitude,
        width,
        center: 0.0,
    };
    ConformalField::new(g.clone(), kind.initial_values(&g).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constant_factor_has_zero_curvature(n in 3usize..7, c in 0.1f64..10.0, ratio in 1.0f64..1.05) {
        let g = Arc::new(RadialGrid::geometric(n, 0.0, 30.0, 60, ratio).unwrap());
        let v = ConformalField::constant(g, c).unwrap();
        let r = scalar_curvature(&v, &Constants::new(n).unwrap()).unwrap();
        prop_assert!(r.iter().all(|x| x.abs() <= 1e-10 * c.powf(-(n as f64 + 2.0) / (n as f64 - 2.0)).max(1.0)));
    }

    #[test]
    fn weighted_norm_is_homogeneous(lambda in -5.0f64..5.0, beta in -3.0f64..0.0, order in 0usize..3) {
        let g = RadialGrid::geometric(3, 0.0, 50.0, 80, 1.03).unwrap();
        let f = g.sample(|r| (0.3 * r).sin() / (1.0 + r * r));
        let scaled: Vec<f64> = f.iter().map(|x| lambda * x).collect();
        let a = weighted_sup_norm(&g, &f, beta, order, None).unwrap().value;
        let b = weighted_sup_norm(&g, &scaled, beta, order, None).unwrap().value;
        prop_assert!((b - lambda.abs() * a).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn mass_is_linear_in_the_tail(n in 3usize..6, c in 0.001f64..0.05) {
        let g = Arc::new(RadialGrid::log_uniform(n, 1.0, 1e3, 400).unwrap());
        let consts = g.constants();
        let e = 2.0 - n as f64;
        let radii = [10.0, 20.0, 40.0, 80.0];
        let m = |k: f64| {
            adm_mass(&ConformalField::from_fn(g.clone(), |r| 1.0 + k * c * r.powf(e)).unwrap(), &consts, &radii).unwrap()
        };
        let (m1, m2) = (m(1.0), m(2.0));
        prop_assert!((m2.extrapolated - 2.0 * m1.extrapolated).abs() <= 1e-8 + 2.0 * (m1.error_estimate + m2.error_estimate));
    }

    #[test]
    fn harmonic_factors_are_fixed_points(n in 3usize..6, c1 in 0.5f64..2.0, c2 in 0.0f64..2.0) {
        // exact for the u-form, whose operator is exact on harmonic functions;
        // the w-form carries O(h^2) truncation
        let e = 2.0 - n as f64;
        let drift = |nodes: usize, f: Form| {
            let g = Arc::new(RadialGrid::geometric(n, 1.0, 60.0, nodes, 1.03f64.powf(80.0 / nodes as f64)).unwrap());
            let v0 = ConformalField::from_fn(g, |r| c1 + c2 * r.powf(e)).unwrap();
            let traj = run(v0.clone(), f, 0.05, 1.0, 5);
            traj.snapshots
                .iter()
                .flat_map(|s| s.values.iter().zip(v0.values()).map(|(a, b)| ((a - b) / b).abs()))
                .fold(0.0, f64::max)
        };
        prop_assert!(drift(80, Form::U) <= 1e-10);
        let (coarse, fine) = (drift(80, Form::W), drift(160, Form::W));
        prop_assert!(fine <= 1e-10 || (coarse / fine).log2() >= 1.7, "{} {}", coarse, fine);
    }

    #[test]
    fn bracket_holds_along_the_flow(amplitude in 0.01f64..0.2, width in 0.5f64..3.0, f in form()) {
        let v0 = bump_field(3, amplitude, width, 40.0, 80);
        let consts = v0.grid().constants();
        let sup = sup_abs_curvature(&v0).unwrap();
        let traj = run(v0.clone(), f, 0.02, 0.5, 6);
        for s in &traj.snapshots {
            let u: Vec<f64> = s.values.iter().zip(v0.values()).map(|(a, b)| a / b).collect();
            let rep = bracket_report(traj.u_time(s.t), &u, sup, &consts, 1e-8).unwrap();
            prop_assert!(rep.satisfied, "{:?}", rep);
        }
    }

    #[test]
    fn ordered_data_stay_ordered(amplitude in 0.01f64..0.3, extra in 0.0f64..0.5, f in form()) {
        let g = Arc::new(RadialGrid::uniform(3, 0.0, 20.0, 81).unwrap());
        let low = ConformalField::from_fn(g.clone(), |r| 1.0 + amplitude / (1.0 + r * r)).unwrap();
        let high = ConformalField::from_fn(g.clone(), |r| {
            1.0 + amplitude / (1.0 + r * r) + extra * (std::f64::consts::PI * r / 20.0).sin().powi(2)
        })
        .unwrap();
        let bc = Boundary {
            inner: InnerBoundary::OriginRegular,
            outer: OuterBoundary::Dirichlet(low.values()[g.len() - 1]),
        };
        let cfg = SolverConfig::new(0.05, bc).with_form(f);
        let go = |v: ConformalField| {
            evolve(FlowState::new(v, 0.0, f.time_tag()).unwrap(), &cfg, 1.0, &SnapshotPlan::Equispaced(6), &mut []).unwrap()
        };
        let (a, b) = (go(low), go(high));
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            for (x, y) in sa.values.iter().zip(&sb.values) {
                prop_assert!(x <= &(y + 1e-12));
            }
        }
    }

    #[test]
    fn nonnegative_curvature_is_kept_and_v_decreases(amplitude in 0.01f64..0.2, width in 0.5f64..2.0, f in form()) {
        let v0 = bump_field(3, amplitude, width, 40.0, 80);
        let traj = run(v0, f, 0.05, 2.0, 9);
        let tol = ConvergenceTolerances { threshold: 1.0, ..Default::default() };
        let rep = convergence_monitor(&traj, 5.0, &tol).unwrap();
        prop_assert!(rep.curvature_nonnegative && rep.v_nonincreasing, "{:?} {:?}", rep.curvature_min.values, rep.monotonicity_violation.values);
    }

    #[test]
    fn frechet_residual_is_first_order(a in 0.1f64..1.0, k in 0.2f64..1.5) {
        let g = RadialGrid::geometric(3, 0.0, 10.0, 60, 1.04).unwrap();
        let w = g.sample(|r| 1.0 + a * (-r * r / 3.0).exp());
        let phi = g.sample(|r| (k * r).cos() / (1.0 + r * r));
        let res = linearization_check(&g, &w, &phi, &[1e-2, 1e-3, 1e-4]).unwrap();
        for p in res.windows(2) {
            prop_assert!(((p[0] / p[1]).log10() - 1.0).abs() < 0.1, "{:?}", res);
        }
    }

    #[test]
    fn stationary_mass_does_not_drift(mass in 0.1f64..3.0) {
        let grid = GridSpec { r_inner: 1.0, r_outer: 200.0, nodes: 200, spacing: Spacing::Geometric, ratio: Some(1.02) };
        let s = Scenario::new("s", 3, ScenarioKind::Schwarzschild { mass }, grid, 0.1, 1.0).unwrap();
        let traj = s.evolve().unwrap();
        let md = mass_drift(&traj, &Constants::new(3).unwrap(), &[20.0, 40.0, 80.0, 160.0]).unwrap();
        prop_assert!(md.max_drift <= 1e-10 * mass.max(1.0));
        prop_assert!((md.initial - mass).abs() <= 1e-6 * mass);
    }

    #[test]
    fn eta_is_nonincreasing_in_each_bound(t in 0.01f64..5.0, k0 in 0.1f64..5.0, a4 in 0.1f64..5.0, a5 in 0.0f64..5.0, bump in 0.0f64..2.0) {
        let base = admissible_eta(t, k0, a4, a5).unwrap();
        prop_assert!(admissible_eta(t, k0 + bump, a4, a5).unwrap() <= base);
        prop_assert!(admissible_eta(t, k0, a4 + bump, a5).unwrap() <= base);
        prop_assert!(admissible_eta(t, k0, a4, a5 + bump).unwrap() <= base);
        prop_assert!(admissible_eta(t + bump, k0, a4, a5).unwrap() >= base);
        prop_assert!(induction_cover(t, base).unwrap() as f64 * base >= t);
        prop_assert!(theta_constant(a4 + bump).unwrap() <= theta_constant(a4).unwrap());
    }

    #[test]
    fn beta_bound_scales_inversely_with_m0(n in 3usize..8, m0 in 0.1f64..4.0, a5 in 0.0f64..3.0, a3 in 0.0f64..3.0, a2 in 0.0f64..3.0, a1p in 0.1f64..3.0) {
        let b = beta_lower_bound(n, m0, a5, a3, a2, a1p).unwrap();
        prop_assert_eq!(beta_lower_bound(n, 2.0 * m0, a5, a3, a2, a1p).unwrap(), b / 2.0);
    }

    #[test]
    fn h_weight_is_nonpositive(d in 0.0f64..100.0, frac in 0.0f64..0.999, theta in 0.0f64..2.0, eta in 0.001f64..1.0) {
        let t = frac * 2.0 * eta;
        prop_assert!(h_weight(d, t, theta, eta).unwrap() <= 0.0);
        prop_assert_eq!(h_weight(0.0, t, theta, eta).unwrap(), 0.0);
    }

    #[test]
    fn bracket_is_ordered(t in 0.0f64..100.0, s in 0.0f64..10.0, n in 3usize..8) {
        let b = maximum_principle_bracket(t, s, &Constants::new(n).unwrap()).unwrap();
        prop_assert!(b.lower <= 1.0 && 1.0 <= b.upper);
    }

    #[test]
    fn scenario_files_round_trip(
        n in 3usize..6,
        amplitude in 0.0f64..1.0,
        width in 0.5f64..3.0,
        nodes in 20usize..200,
        dt in 0.001f64..1.0,
        t_end in 0.0f64..10.0,
        w in any::<bool>(),
    ) {
        let grid = GridSpec { r_inner: 0.0, r_outer: 50.0, nodes, spacing: Spacing::Geometric, ratio: Some(1.02) };
        let kind = ScenarioKind::Bump { amplitude, width, center: 0.0 };
        let mut s = Scenario::new("p", n, kind, grid, dt, t_end).unwrap();
        if w {
            s.solver.form = Form::W;
        }
        let text = scenario_to_toml(&s).unwrap();
        prop_assert_eq!(parse_scenario(&text).unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn exhaustion_differences_are_nonnegative(amplitude in 0.01f64..0.1) {
        let grid = GridSpec { r_inner: 0.0, r_outer: 20.0, nodes: 50, spacing: Spacing::Geometric, ratio: Some(1.06) };
        let kind = ScenarioKind::Bump { amplitude, width: 1.0, center: 0.0 };
        let s = Scenario::new("e", 3, kind, grid, 1.0, 20.0).unwrap();
        let plan = ExhaustionPlan::new(s.clone(), vec![20.0, 40.0, 80.0], 5.0).unwrap();
        let t = exhaustion_study(&plan, 20.0, &s.solver).unwrap();
        prop_assert!(t.errors().iter().all(|&e| e >= 0.0 && e.is_finite()));
    }
}
