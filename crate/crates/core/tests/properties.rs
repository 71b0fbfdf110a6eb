//! Property tests over randomly drawn matrices and systems.
//!
//! Strategies draw sizes and a seed; the matrices themselves come from a
//! seeded generator so failures replay exactly.

use privperturb::controllability::{
    corollary4_certificate, is_controllable, lemma3_check, mirror_perturbation,
    perturbed_controllability_matrix, Method,
};
use privperturb::design_l2::{algorithm1, feasibility_floor, z_star};
use privperturb::hvac::spectral_radius;
use privperturb::io::{fmt_num, parse_system, round_sig, PerturbationFile, SystemFile};
use privperturb::linalg::{null_space, pinv, rank_tol, svd, Matrix, Tolerance, Vector};
use privperturb::model::{
    apply_perturbation, f_matrix, pencil, simulate, LinearSystem, Perturbation, ReleaseMap,
};
use privperturb::oracles::{binomial, lex_rank, sparsest_null_vector};
use privperturb::privacy::{
    check_full_row_rank_everywhere, min_protected_count, output_invariance_witness_test,
    protected_entries, TargetSpec,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Random matrix of a chosen rank.
fn low_rank(rng: &mut ChaCha8Rng, r: usize, c: usize, rank: usize) -> Matrix {
    gaussian(rng, r, rank) * gaussian(rng, rank, c)
}

fn random_system(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize) -> LinearSystem {
    LinearSystem::new(
        gaussian(rng, n, n) * (0.9 / (n as f64).sqrt()),
        gaussian(rng, n, p),
        gaussian(rng, q, n),
        gaussian(rng, q, p),
    )
    .unwrap()
}

fn random_perturbation(rng: &mut ChaCha8Rng, n: usize, p: usize, l: usize) -> Perturbation {
    Perturbation::from_assembled(&(gaussian(rng, p + l, n + p) * 0.3), n, p, l).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn svd_reconstructs(seed in any::<u64>(), r in 1usize..=60, c in 1usize..=60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = rng.random_range(0..=r.min(c));
        let m = if rank == r.min(c) { gaussian(&mut rng, r, c) } else { low_rank(&mut rng, r, c, rank) };
        let err = (svd(&m).unwrap().reconstruct() - &m).norm();
        prop_assert!(err <= 1e-10 * (1.0 + m.norm()), "residual {err:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rank_is_transpose_invariant(seed in any::<u64>(), r in 1usize..=15, c in 1usize..=15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = rng.random_range(0..=r.min(c));
        let m = low_rank(&mut rng, r, c, rank);
        let tol = Tolerance::default();
        prop_assert_eq!(rank_tol(&m, &tol).unwrap(), rank_tol(&m.transpose(), &tol).unwrap());
        prop_assert_eq!(rank_tol(&m, &tol).unwrap(), rank);
    }

    #[test]
    fn null_space_is_orthonormal_and_annihilated(seed in any::<u64>(), r in 1usize..=15, c in 1usize..=15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = rng.random_range(0..=r.min(c));
        let m = low_rank(&mut rng, r, c, rank);
        let tol = Tolerance::default();
        let n = null_space(&m, &tol).unwrap();
        prop_assert_eq!(n.ncols(), c - rank_tol(&m, &tol).unwrap());
        let k = n.ncols();
        prop_assert!((n.transpose() * &n - Matrix::identity(k, k)).norm() <= 1e-8);
        let s1 = svd(&m).unwrap().singular_values.get(0).copied().unwrap_or(0.0);
        for j in 0..k {
            prop_assert!((&m * n.column(j)).norm() <= 10.0 * tol.rank_tol * s1 + 1e-300);
        }
    }

    #[test]
    fn pinv_of_pinv_is_identity_map(seed in any::<u64>(), r in 1usize..=12, c in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = gaussian(&mut rng, r, c);
        let tol = Tolerance::default();
        let back = pinv(&pinv(&m, &tol).unwrap(), &tol).unwrap();
        prop_assert!((back - &m).norm() <= 1e-6 * m.norm());
    }

    #[test]
    fn pencil_is_affine_in_z(seed in any::<u64>(), n in 1usize..=6, p in 1usize..=4, q in 1usize..=4,
                             z1 in -5.0f64..5.0, z2 in -5.0f64..5.0, alpha in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng, n, p, q);
        let mixed = pencil(&sys, alpha * z1 + (1.0 - alpha) * z2);
        let combo = pencil(&sys, z1) * alpha + pencil(&sys, z2) * (1.0 - alpha);
        prop_assert!((mixed - combo).amax() <= 1e-12 * (1.0 + z1.abs() + z2.abs()));
    }

    #[test]
    fn perturbation_enters_the_pencil_through_f(seed in any::<u64>(), n in 1usize..=6, p in 1usize..=4,
                                                q in 1usize..=4, l in 1usize..=4, z in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng, n, p, q);
        let rel = ReleaseMap::new(gaussian(&mut rng, q, l));
        let k = random_perturbation(&mut rng, n, p, l);
        let perturbed = apply_perturbation(&sys, &rel, &k).unwrap();
        let expected = pencil(&sys, z) + f_matrix(&sys, &rel) * k.assemble();
        prop_assert!((pencil(&perturbed, z) - expected).amax() <= 1e-12 * 100.0);
        let zero = Perturbation::zeros(n, p, l);
        prop_assert_eq!(apply_perturbation(&sys, &rel, &zero).unwrap(), sys);
    }

    #[test]
    fn kernel_directions_leave_outputs_unchanged(seed in any::<u64>(), n in 1usize..=5, extra in 1usize..=3,
                                                 q in 1usize..=3, horizon in 1usize..=30) {
        // More inputs than outputs gives every pencil a kernel.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = q + extra;
        let sys = random_system(&mut rng, n, p, q);
        let z = rng.random_range(-1.0..1.0);
        let tol = Tolerance::default();
        let kernel = null_space(&pencil(&sys, z), &tol).unwrap();
        prop_assume!(kernel.ncols() > 0);
        let v: Vector = kernel.column(0).into_owned();
        let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let inputs: Vec<Vector> = (0..=horizon).map(|_| Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0))).collect();
        for m in [-10.0, 1.0, 7.0] {
            let w = output_invariance_witness_test(&sys, z, &v, m, horizon, &x0, &inputs).unwrap();
            prop_assert!(w.deviation <= 1e-6 * (1.0 + w.max_output_norm), "m {m}: {w:?}");
        }
    }

    #[test]
    fn kernel_dimension_matches_rank(seed in any::<u64>(), n in 1usize..=6, p in 1usize..=5, q in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng, n, p, q);
        let tol = Tolerance::default();
        let z = rng.random_range(-2.0..2.0);
        let d = pencil(&sys, z);
        prop_assert_eq!(null_space(&d, &tol).unwrap().ncols(), n + p - rank_tol(&d, &tol).unwrap());
    }

    #[test]
    fn certified_count_reaches_the_kernel_bound(seed in any::<u64>(), n in 1usize..=5, extra in 1usize..=3, q in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng, n, q + extra, q);
        let tol = Tolerance::default();
        let z = rng.random_range(0.2..1.5);
        let all = TargetSpec::all(sys.n(), sys.p());
        let report = protected_entries(&sys, &all, z, &tol, 8, seed).unwrap();
        if report.witness_vector.is_some() {
            let bound = min_protected_count(&sys, z, &tol).unwrap();
            prop_assert!(report.certified_count() >= bound);
        }
    }

    #[test]
    fn feedback_check_agrees_with_kalman(seed in any::<u64>(), n in 1usize..=5, p in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, n, n);
        let b = gaussian(&mut rng, n, p);
        let tol = Tolerance::default();
        prop_assume!(is_controllable(&a, &b, &tol, Method::KalmanRank).unwrap().controllable);
        let k_ss = gaussian(&mut rng, p, n);
        // Sometimes make I + Ksi singular so both verdicts are exercised.
        let k_si = if rng.random_bool(0.3) {
            let mut s = Matrix::zeros(p, p);
            s[(0, 0)] = -1.0;
            s
        } else {
            gaussian(&mut rng, p, p) * 0.3
        };
        let a_pert = &a + &b * &k_ss;
        let b_pert = &b * (Matrix::identity(p, p) + &k_si);
        let kalman = is_controllable(&a_pert, &b_pert, &tol, Method::KalmanRank).unwrap().controllable;
        prop_assert_eq!(lemma3_check(&a, &b, &k_ss, &k_si, &tol).unwrap(), kalman);
    }

    #[test]
    fn eps_certificate_implies_controllability(seed in any::<u64>(), n in 1usize..=5, p in 1usize..=4, eps in 0.05f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, n, n);
        let b = gaussian(&mut rng, n, p);
        let tol = Tolerance::default();
        prop_assume!(is_controllable(&a, &b, &tol, Method::KalmanRank).unwrap().controllable);
        let s = gaussian(&mut rng, p, p);
        let k_si = &s * s.transpose() * 0.1 - Matrix::identity(p, p) * rng.random_range(0.0..1.0);
        let k_ss = gaussian(&mut rng, p, n) * 0.1;
        let (holds, _) = corollary4_certificate(&k_si, eps, &tol);
        if holds {
            let b_pert = &b * (Matrix::identity(p, p) + &k_si);
            prop_assert!(is_controllable(&(&a + &b * &k_ss), &b_pert, &tol, Method::KalmanRank).unwrap().controllable);
        }
    }

    #[test]
    fn mirror_negates_the_controllability_matrix(seed in any::<u64>(), n in 1usize..=5, p in 1usize..=3, l in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, n, n);
        let b = gaussian(&mut rng, n, p);
        let k = random_perturbation(&mut rng, n, p, l);
        let c1 = perturbed_controllability_matrix(&a, &b, &k);
        let c2 = perturbed_controllability_matrix(&a, &b, &mirror_perturbation(&k));
        prop_assert!((c1 + c2).amax() <= 1e-10 * (1.0 + a.amax()).powi(n as i32) * (1.0 + b.amax()) * 10.0);
    }

    #[test]
    fn algorithm1_witnesses_replay(seed in any::<u64>(), n in 1usize..=5, extra in 1usize..=3, q in 1usize..=3) {
        // With |z| > 1 the replay multiplies rounding in the perturbed
        // matrices by |z|^25, so the draw keeps A (and hence z) stable.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sys = random_system(&mut rng, n, q + extra, q);
        let radius = spectral_radius(&sys.a).unwrap();
        if radius > 0.95 {
            sys.a *= 0.95 / radius;
        }
        let rel = ReleaseMap::identity(q);
        let tol = Tolerance::default();
        prop_assume!(check_full_row_rank_everywhere(&sys, &tol, seed).is_ok_and(|r| r.holds));
        let floor = feasibility_floor(&sys, &rel, &tol).unwrap();
        let res = algorithm1(&sys, &rel, &TargetSpec::all(sys.n(), sys.p()), floor, &tol).unwrap();
        prop_assert_eq!(res.z, z_star(&sys.a));
        if res.protection.all_protected {
            let v = res.protection.witness_vector.clone().unwrap();
            let perturbed = apply_perturbation(&sys, &rel, &res.k).unwrap();
            let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let inputs: Vec<Vector> = (0..=25).map(|_| Vector::from_fn(sys.p(), |_, _| rng.random_range(-1.0..1.0))).collect();
            for m in [1.0, -3.0, 10.0] {
                let w = output_invariance_witness_test(&perturbed, res.z, &v, m, 25, &x0, &inputs).unwrap();
                prop_assert!(w.deviation <= 1e-6 * (1.0 + w.max_output_norm));
            }
        }
    }

    #[test]
    fn null_vector_search_counts_every_smaller_subset(seed in any::<u64>(), c in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rng.random_range(1..c);
        let m = gaussian(&mut rng, r, c);
        let res = sparsest_null_vector(&m, &Tolerance::default()).unwrap();
        let smaller: u64 = (1..res.sparsity).map(|k| binomial(c, k)).sum();
        prop_assert_eq!(res.subsets_examined, smaller + lex_rank(&res.support, c) + 1);
        prop_assert!((&m * &res.v_star).norm() <= 1e-8 * (1.0 + m.norm()));
    }

    #[test]
    fn simulation_is_linear_in_the_initial_state(seed in any::<u64>(), n in 1usize..=5, p in 1usize..=3, q in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng, n, p, q);
        let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let zeros = vec![Vector::zeros(p); 11];
        let one = simulate(&sys, &x0, &zeros, 10).unwrap();
        let two = simulate(&sys, &(&x0 * 2.0), &zeros, 10).unwrap();
        for (a, b) in one.outputs.iter().zip(&two.outputs) {
            prop_assert!((a * 2.0 - b).amax() <= 1e-10 * (1.0 + b.amax()));
        }
    }

    #[test]
    fn target_spec_text_round_trips(states in proptest::collection::vec(0usize..20, 0..6),
                                    inputs in proptest::collection::vec(0usize..20, 0..6)) {
        let spec = TargetSpec::new(states, inputs);
        let back: TargetSpec = spec.to_string().parse().unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn formatted_numbers_parse_back_to_their_rounding(v in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
        let parsed: f64 = fmt_num(v).parse().unwrap();
        prop_assert_eq!(parsed, round_sig(v));
    }

    #[test]
    fn files_round_trip(seed in any::<u64>(), n in 1usize..=4, p in 1usize..=3, q in 1usize..=3, l in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = random_system(&mut rng, n, p, q);
        let rel = ReleaseMap::new(gaussian(&mut rng, q, l));
        let text = serde_json::to_string(&SystemFile::from_model(&sys, &rel)).unwrap();
        let (sys2, rel2) = parse_system(&text).unwrap();
        prop_assert_eq!(sys2, sys);
        prop_assert_eq!(rel2, rel);
        let k = random_perturbation(&mut rng, n, p, l);
        let text = serde_json::to_string(&PerturbationFile::from_model(&k)).unwrap();
        let back: PerturbationFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.to_model().unwrap(), k);
    }
}
