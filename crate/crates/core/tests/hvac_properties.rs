//! Behaviour of the building case study beyond the headline numbers.

use privperturb::controllability::{is_controllable, Method};
use privperturb::design_l2::tune_rho;
use privperturb::hvac::{closed_loop_sim, dp_baseline, l2_fixture, DpParams, Scenario, ZoneParams};
use privperturb::linalg::{Matrix, Tolerance, Vector};
use privperturb::model::{apply_perturbation, Perturbation};
use privperturb::privacy::TargetSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stacked(x: &Vector, u: &Vector) -> Vector {
    Vector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
}

#[test]
fn perturbation_signals_vanish_at_the_equilibrium() {
    let tol = Tolerance::default();
    let (sys, rel) = l2_fixture(&ZoneParams::path(10), 3).unwrap();
    let targets = TargetSpec::new((0..sys.n()).collect(), sys.exogenous_indices());
    let k = tune_rho(&sys, &rel, &targets, &tol).unwrap().result.k;
    // Nobody present and a zero set point put the operating point at the
    // origin, where the perturbation has nothing left to add.
    let scenario = Scenario {
        setpoint: 0.0,
        occupancy_max: 0,
        horizon: 200,
        ..Scenario::default()
    };
    let report = closed_loop_sim(&sys, &rel, &k, &scenario).unwrap();
    let assembled = k.assemble();
    let (n, p) = (sys.n(), sys.p());
    let size = |k_step: usize| {
        let mu = &assembled * stacked(&report.temperatures[k_step], &report.inputs[k_step]);
        mu.rows(0, p).norm() + mu.rows(p, mu.len() - p).norm()
    };
    assert!(size(0) > 1e-3, "the run should start away from equilibrium");
    let last = size(200);
    assert!(last < 1e-6, "perturbation still {last:e} at k = 200");
    assert_eq!(assembled.ncols(), n + p);
}

#[test]
fn repeated_seeds_reproduce_every_simulation() {
    let (sys, rel) = l2_fixture(&ZoneParams::path(6), 11).unwrap();
    let tol = Tolerance::default();
    let targets = TargetSpec::new((0..sys.n()).collect(), sys.exogenous_indices());
    let k = tune_rho(&sys, &rel, &targets, &tol).unwrap().result.k;
    let scenario = Scenario {
        seed: 77,
        horizon: 60,
        ..Scenario::default()
    };
    let first = closed_loop_sim(&sys, &rel, &k, &scenario).unwrap();
    let second = closed_loop_sim(&sys, &rel, &k, &scenario).unwrap();
    assert_eq!(first, second);
    let dp = DpParams::default();
    assert_eq!(
        dp_baseline(&sys, &rel, &dp, &scenario).unwrap(),
        dp_baseline(&sys, &rel, &dp, &scenario).unwrap()
    );
    let other = Scenario { seed: 78, ..scenario };
    assert_ne!(closed_loop_sim(&sys, &rel, &k, &other).unwrap().inputs, first.inputs);
}

#[test]
fn supply_inputs_keep_control_under_any_perturbation() {
    let tol = Tolerance::default();
    let (sys, rel) = l2_fixture(&ZoneParams::path(5), 8).unwrap();
    let (n, p, l) = (sys.n(), sys.p(), rel.l());
    let ctrl = sys.control_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    for draw in 0..50 {
        let scale = rng.random_range(0.1..10.0);
        let mut full = Matrix::from_fn(p + l, n + p, |_, _| scale * rng.random_range(-1.0..1.0));
        // Supply temperatures are never perturbed.
        for &j in &ctrl {
            full.column_mut(n + j).fill(0.0);
        }
        let k = Perturbation::from_assembled(&full, n, p, l).unwrap();
        let perturbed = apply_perturbation(&sys, &rel, &k).unwrap();
        let bc = perturbed.b.select_columns(&ctrl);
        let verdict = is_controllable(&perturbed.a, &bc, &tol, Method::KalmanRank).unwrap();
        assert!(verdict.controllable, "draw {draw}: {verdict:?}");
    }
}
