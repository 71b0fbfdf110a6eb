//! Disutility-minded design: bound `|[H, Pi] K|_2` while forcing the rank of
//! the perturbed pencil below a target.
//!
//! The analytic route fixes `z` at the minimizer of `|D(z)|_F` and strips the
//! leading singular directions of `D(z)^+ F`. An SDP relaxation of the same
//! problem is available for comparison.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::design_l0::{
    add_pencil_blocks, add_trace_objective, evaluate, sdp_tolerance, DesignResult, EpsCertificate,
    SolverSummary,
};
use crate::error::{Error, Result};
use crate::linalg::{hstack, pinv, rank_tol, spectral_norm, svd, Matrix, Svd, Tolerance};
use crate::model::{f_matrix, pencil, LinearSystem, Perturbation, ReleaseMap};
use crate::privacy::{check_full_row_rank_everywhere, TargetSpec};
use crate::sdp::{self, kkt_report, LinearForm, SdpProblem, SolverOptions, Status};
use crate::controllability::corollary4_certificate;

/// Seed for the randomized parts of the full-row-rank check and the witness
/// search. Both are deterministic given the seed.
const CHECK_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2DesignConfig {
    pub rho: usize,
    pub tol: Tolerance,
    pub use_sdp_variant: bool,
    /// Nuclear-norm weight, SDP variant only.
    pub c: f64,
    /// Margin of the `Ksi` surrogate, SDP variant only.
    pub eps: f64,
    pub sdp_opts: SolverOptions,
}

impl L2DesignConfig {
    pub fn new(rho: usize) -> Self {
        Self {
            rho,
            tol: Tolerance::default(),
            use_sdp_variant: false,
            c: 1.0,
            eps: 0.1,
            sdp_opts: SolverOptions {
                max_iters: 150,
                ..SolverOptions::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho == 0 {
            return Err(Error::InvalidArgument("rho must be at least 1".into()));
        }
        if self.use_sdp_variant {
            if !(self.c > 0.0 && self.c.is_finite()) {
                return Err(Error::InvalidArgument(format!("c must be positive, got {}", self.c)));
            }
            if !(self.eps > 0.0 && self.eps.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "eps must be positive, got {}",
                    self.eps
                )));
            }
        }
        Tolerance::new(self.tol.rank_tol, self.tol.zero_tol)?;
        Ok(())
    }
}

/// `Tr(A) / n`, the real minimizer of `|D(z)|_F^2`.
pub fn z_star(a: &Matrix) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    a.trace() / n as f64
}

/// Everything the analytic design needs at a fixed `z`, computed once.
struct Prepared {
    z: f64,
    /// SVD of `D(z)^+ F`; `u` spans the pencil's column space side.
    svd: Svd,
    rank_f: usize,
    /// Singular values of `D(z)^+ F` above the cutoff.
    usable: usize,
    hp_norm: f64,
    rows: usize,
}

impl Prepared {
    fn new(sys: &LinearSystem, rel: &ReleaseMap, z: f64, tol: &Tolerance) -> Result<Self> {
        let f = f_matrix(sys, rel);
        let d = pencil(sys, z);
        let dec = svd(&(pinv(&d, tol)? * &f))?;
        let rank_f = rank_tol(&f, tol)?;
        let s1 = dec.singular_values.get(0).copied().unwrap_or(0.0);
        let usable = dec
            .singular_values
            .iter()
            .take(rank_f)
            .filter(|&&s| s > tol.rank_tol * s1 && s > 0.0)
            .count();
        let hp = hstack(&[&sys.h, &rel.pi]);
        Ok(Self {
            z,
            svd: dec,
            rank_f,
            usable,
            hp_norm: spectral_norm(&hp)?,
            rows: sys.n() + sys.q(),
        })
    }

    fn floor(&self) -> usize {
        (self.rows + 1).saturating_sub(self.rank_f).max(1)
    }

    fn k_matrix(&self, rho: usize) -> Result<Matrix> {
        let kr = self.svd.v.nrows();
        let kc = self.svd.u.nrows();
        if rho > self.rows {
            return Ok(Matrix::zeros(kr, kc));
        }
        if rho < self.floor() {
            return Err(Error::InfeasibleRank {
                rho,
                floor: self.floor(),
            });
        }
        let terms = self.rows - rho + 1;
        if terms > self.usable {
            // Feasible in exact arithmetic but the needed singular values sit
            // below the numerical cutoff.
            return Err(Error::InfeasibleRank {
                rho,
                floor: self.rows + 1 - self.usable,
            });
        }
        let mut k = Matrix::zeros(kr, kc);
        for l in 0..terms {
            let s = self.svd.singular_values[l];
            k -= self.svd.v.column(l) * self.svd.u.column(l).transpose() / s;
        }
        Ok(k)
    }

    fn bound(&self) -> f64 {
        let inv: f64 = self
            .svd
            .singular_values
            .iter()
            .take(self.usable)
            .map(|s| 1.0 / s)
            .sum();
        self.hp_norm * inv
    }
}

fn require_full_row_rank(sys: &LinearSystem, tol: &Tolerance) -> Result<()> {
    let rep = check_full_row_rank_everywhere(sys, tol, CHECK_SEED)?;
    if rep.holds {
        return Ok(());
    }
    let zeros: Vec<String> = rep
        .invariant_zeros
        .iter()
        .map(|z| format!("{:.6}{:+.6}i", z.re, z.im))
        .collect();
    Err(Error::Precondition(format!(
        "D(z) must have full row rank for every z; generic rank {} of {}, rank drops at [{}]",
        rep.probe_rank,
        sys.n() + sys.q(),
        zeros.join(", ")
    )))
}

/// Smallest feasible rank target, `n + q - rank(F) + 1`.
pub fn feasibility_floor(sys: &LinearSystem, rel: &ReleaseMap, tol: &Tolerance) -> Result<usize> {
    let f = f_matrix(sys, rel);
    Ok((sys.n() + sys.q() + 1).saturating_sub(rank_tol(&f, tol)?).max(1))
}

/// The rank-reducing perturbation at a fixed `z`.
///
/// `rho > n + q` gives zero. Otherwise the leading `n + q - rho + 1` singular
/// triples `(sigma, u, v)` of `D(z)^+ F` yield `K = -sum v u^T / sigma`.
pub fn construct_k(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    z: f64,
    rho: usize,
    tol: &Tolerance,
) -> Result<Perturbation> {
    sys.validate()?;
    rel.validate(sys)?;
    if rho == 0 {
        return Err(Error::InvalidArgument("rho must be at least 1".into()));
    }
    require_full_row_rank(sys, tol)?;
    let prep = Prepared::new(sys, rel, z, tol)?;
    Perturbation::from_assembled(&prep.k_matrix(rho)?, sys.n(), sys.p(), rel.l())
}

/// `|[H, Pi]|_2 * sum 1/sigma` over the nonzero singular values of `D(z)^+ F`.
pub fn upper_bound(sys: &LinearSystem, rel: &ReleaseMap, z: f64, tol: &Tolerance) -> Result<f64> {
    Ok(Prepared::new(sys, rel, z, tol)?.bound())
}

fn finish(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    targets: &TargetSpec,
    prep: &Prepared,
    rho: usize,
    tol: &Tolerance,
    start: Instant,
) -> Result<DesignResult> {
    let exo = sys.exogenous_indices();
    let km = prep.k_matrix(rho)?;
    let k = Perturbation::from_assembled(&km, sys.n(), exo.len(), rel.l())?.embed_inputs(&exo, sys.p());
    let mut res = evaluate(sys, rel, k, prep.z, targets, tol, CHECK_SEED)?;
    res.rho = Some(rho);
    res.rank_target_met = Some(res.pencil_rank < rho);
    res.upper_bound = Some(prep.bound());
    res.seconds = start.elapsed().as_secs_f64();
    Ok(res)
}

fn prepare(sys: &LinearSystem, rel: &ReleaseMap, tol: &Tolerance) -> Result<Prepared> {
    sys.validate()?;
    rel.validate(sys)?;
    let view = sys.exogenous_part();
    require_full_row_rank(&view, tol)?;
    Prepared::new(&view, rel, z_star(&sys.a), tol)
}

/// Analytic design: `z = Tr(A)/n`, then the rank-reducing construction for `rho`.
///
/// With a control partition the design runs on the exogenous inputs and the
/// controllability verdict refers to the control inputs.
pub fn algorithm1(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    targets: &TargetSpec,
    rho: usize,
    tol: &Tolerance,
) -> Result<DesignResult> {
    let start = Instant::now();
    if rho == 0 {
        return Err(Error::InvalidArgument("rho must be at least 1".into()));
    }
    let prep = prepare(sys, rel, tol)?;
    finish(sys, rel, targets, &prep, rho, tol, start)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    AllProtected,
    FeasibilityFloor,
    RhoOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneStep {
    pub rho: usize,
    pub pencil_rank: usize,
    pub l2_objective: f64,
    pub upper_bound: f64,
    pub certified: usize,
    pub all_protected: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    /// The protecting design, or the best-coverage one when none protects.
    pub result: DesignResult,
    pub rho_final: usize,
    pub stop: StopReason,
    pub not_achievable: bool,
    pub history: Vec<TuneStep>,
}

/// Lower `rho` one step at a time from `n + q` until every target is
/// protected, the feasibility floor is reached, or `rho = 1`.
pub fn tune_rho(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    targets: &TargetSpec,
    tol: &Tolerance,
) -> Result<TuneOutcome> {
    targets.validate(sys.n(), sys.p())?;
    let prep = prepare(sys, rel, tol)?;
    let floor = prep.floor().max(prep.rows + 1 - prep.usable.min(prep.rows));
    let top = prep.rows;
    let mut history = Vec::new();
    let mut best: Option<DesignResult> = None;
    let mut rho = top;
    let (stop, last) = loop {
        let res = finish(sys, rel, targets, &prep, rho, tol, Instant::now())?;
        history.push(TuneStep {
            rho,
            pencil_rank: res.pencil_rank,
            l2_objective: res.objective.l2,
            upper_bound: res.upper_bound.unwrap_or(f64::NAN),
            certified: res.protection.certified_count(),
            all_protected: res.protection.all_protected,
            seconds: res.seconds,
        });
        log::info!(
            "rho = {rho}: rank {}, |[H,Pi]K|_2 = {:.4}, {} of {} certified",
            res.pencil_rank,
            res.objective.l2,
            res.protection.certified_count(),
            targets.len()
        );
        let protected = res.protection.all_protected;
        let better = best
            .as_ref()
            .is_none_or(|b| res.protection.certified_count() > b.protection.certified_count());
        if better {
            best = Some(res.clone());
        }
        if protected {
            break (StopReason::AllProtected, res);
        }
        if rho <= 1 {
            break (StopReason::RhoOne, res);
        }
        if rho <= floor {
            break (StopReason::FeasibilityFloor, res);
        }
        rho -= 1;
    };
    let (result, not_achievable) = if stop == StopReason::AllProtected {
        (last, false)
    } else {
        (best.expect("loop runs at least once"), true)
    };
    let rho_final = result.rho.unwrap_or(top);
    Ok(TuneOutcome {
        result,
        rho_final,
        stop,
        not_achievable,
        history,
    })
}

/// CSV with header `rho,pencil_rank,l2_objective,upper_bound,all_protected,seconds`.
pub fn write_tune_csv<W: Write>(steps: &[TuneStep], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rho", "pencil_rank", "l2_objective", "upper_bound", "all_protected", "seconds"])?;
    for s in steps {
        w.write_record([
            s.rho.to_string(),
            s.pencil_rank.to_string(),
            crate::io::fmt_num(s.l2_objective),
            crate::io::fmt_num(s.upper_bound),
            s.all_protected.to_string(),
            crate::io::fmt_num(s.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Variable layout of the ℓ2 relaxation.
#[derive(Debug, Clone)]
pub struct L2Layout {
    pub rows: usize,
    pub cols: usize,
    /// Free variable per entry of `K`, row-major; mirrored `Ksi` entries share one.
    pub k_vars: Vec<usize>,
    pub t: usize,
    pub z: usize,
    pub spectral: usize,
    pub nuclear: usize,
    pub eps_block: usize,
}

impl L2Layout {
    pub fn k_form(&self, r: usize, c: usize) -> LinearForm {
        LinearForm::new().with_free(self.k_vars[r * self.cols + c], 1.0)
    }

    pub fn extract_k(&self, sol: &sdp::SdpSolution) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |r, c| {
            sol.free_values[self.k_vars[r * self.cols + c]]
        })
    }
}

/// SDP relaxation: minimize `t + c (Tr W1 + Tr W2)` with `t` bounding
/// `|[H, Pi] K|_2`, the nuclear block on `D(z) + F K` and the `Ksi` surrogate.
pub fn build_sdp_l2(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    cfg: &L2DesignConfig,
) -> Result<(SdpProblem, L2Layout)> {
    sys.validate()?;
    rel.validate(sys)?;
    cfg.validate()?;
    let ctrl = crate::controllability::is_controllable(
        &sys.a,
        &sys.b,
        &cfg.tol,
        crate::controllability::Method::KalmanRank,
    )?;
    if !ctrl.controllable {
        return Err(Error::Uncontrollable {
            rank: ctrl.rank,
            n: sys.n(),
        });
    }
    let (n, p, q, l) = (sys.n(), sys.p(), sys.q(), rel.l());
    let (kr, kc) = (p + l, n + p);
    let mut prob = SdpProblem::new();
    let mut k_vars = vec![usize::MAX; kr * kc];
    for r in 0..kr {
        for c in 0..kc {
            let mirror = r < p && c >= n && c - n < r;
            k_vars[r * kc + c] = if mirror {
                k_vars[(c - n) * kc + n + r]
            } else {
                prob.add_free(format!("k[{r},{c}]"))
            };
        }
    }
    let t = prob.add_free("t");
    let mut layout = L2Layout {
        rows: kr,
        cols: kc,
        k_vars,
        t,
        z: 0,
        spectral: 0,
        nuclear: 0,
        eps_block: 0,
    };
    let blocks = add_pencil_blocks(&mut prob, sys, rel, cfg.eps, &|r, c| layout.k_form(r, c));
    layout.z = blocks.z;
    layout.nuclear = blocks.nuclear;
    layout.eps_block = blocks.eps_block;

    // [[t I_q, [H, Pi] K], [., t I_{n+p}]] ⪰ 0.
    let hp = hstack(&[&sys.h, &rel.pi]);
    let size = q + kc;
    let s = prob.add_block(size, "spectral");
    layout.spectral = s;
    for i in 0..size {
        prob.add_equality(LinearForm::new().with_entry(s, i, i, 1.0).with_free(t, -1.0), 0.0);
    }
    for i in 0..q {
        for j in i + 1..q {
            prob.add_equality(LinearForm::new().with_entry(s, i, j, 1.0), 0.0);
        }
    }
    for i in 0..kc {
        for j in i + 1..kc {
            prob.add_equality(LinearForm::new().with_entry(s, q + i, q + j, 1.0), 0.0);
        }
    }
    for i in 0..q {
        for j in 0..kc {
            let mut form = LinearForm::new().with_entry(s, i, q + j, 1.0);
            for r in 0..kr {
                if hp[(i, r)] != 0.0 {
                    form.add_free(layout.k_vars[r * kc + j], -hp[(i, r)]);
                }
            }
            prob.add_equality(form, 0.0);
        }
    }

    let mut obj = LinearForm::new().with_free(t, 1.0);
    add_trace_objective(&mut obj, &blocks, blocks.rows + kc, cfg.c);
    prob.objective = obj;
    Ok((prob, layout))
}

/// Solve the ℓ2 relaxation and verify the result.
pub fn solve_sdp_l2(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    targets: &TargetSpec,
    cfg: &L2DesignConfig,
    seed: u64,
) -> Result<DesignResult> {
    let start = Instant::now();
    let exo = sys.exogenous_indices();
    let view = sys.exogenous_part();
    let (prob, layout) = build_sdp_l2(&view, rel, cfg)?;
    let solve_start = Instant::now();
    let sol = sdp::solve(&prob, &cfg.sdp_opts)?;
    let solve_seconds = solve_start.elapsed().as_secs_f64();
    match sol.status {
        Status::Optimal => {}
        Status::MaxIters => log::warn!("ℓ2 relaxation stopped at the iteration limit"),
        other => {
            return Err(Error::Solver(format!(
                "ℓ2 relaxation finished with status {other:?}"
            )))
        }
    }
    let z = sol.free_values[layout.z];
    let km = layout.extract_k(&sol);
    let k_view = Perturbation::from_assembled(&km, view.n(), view.p(), rel.l())?;
    let tol = sdp_tolerance();
    let (holds, min_eig) = corollary4_certificate(&k_view.k_si, cfg.eps, &tol);
    let k = k_view.embed_inputs(&exo, sys.p());
    let mut res = evaluate(sys, rel, k, z, targets, &tol, seed)?;
    res.rho = Some(cfg.rho);
    res.rank_target_met = Some(res.pencil_rank < cfg.rho);
    res.certificate = Some(EpsCertificate {
        eps: cfg.eps,
        holds,
        min_eig,
    });
    res.solver = Some(SolverSummary {
        status: sol.status,
        iterations: sol.iterations,
        objective: sol.objective_value,
        kkt: kkt_report(&prob, &sol),
        seconds: solve_seconds,
    });
    res.seconds = start.elapsed().as_secs_f64();
    Ok(res)
}

/// Run the analytic construction or the SDP variant as configured.
pub fn design(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    targets: &TargetSpec,
    cfg: &L2DesignConfig,
    seed: u64,
) -> Result<DesignResult> {
    cfg.validate()?;
    if cfg.use_sdp_variant {
        solve_sdp_l2(sys, rel, targets, cfg, seed)
    } else {
        algorithm1(sys, rel, targets, cfg.rho, &cfg.tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::null_space;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    /// Random data with `q < p`, which has no invariant zeros generically.
    fn full_row_rank_system(seed: u64, n: usize, p: usize, q: usize) -> (LinearSystem, ReleaseMap) {
        assert!(q < p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = LinearSystem::new(
            random(&mut rng, n, n) * 0.5,
            random(&mut rng, n, p),
            random(&mut rng, q, n),
            random(&mut rng, q, p),
        )
        .unwrap();
        (sys, ReleaseMap::identity(q))
    }

    #[test]
    fn z_star_examples() {
        assert_eq!(z_star(&Matrix::identity(10, 10)), 1.0);
        assert_eq!(z_star(&Matrix::zeros(3, 3)), 0.0);
        assert_eq!(z_star(&Matrix::from_row_slice(2, 2, &[1.0, 5.0, 7.0, 2.0])), 1.5);
    }

    #[test]
    fn rank_drops_to_rho_minus_one() {
        let (sys, rel) = full_row_rank_system(1, 4, 4, 3);
        let tol = Tolerance::default();
        let floor = feasibility_floor(&sys, &rel, &tol).unwrap();
        let t = TargetSpec::all(4, 3);
        for rho in floor..=7 {
            let res = algorithm1(&sys, &rel, &t, rho, &tol).unwrap();
            assert_eq!(res.pencil_rank, rho - 1, "rho {rho}");
            assert!(res.objective.l2 <= res.upper_bound.unwrap() + 1e-9);
        }
    }

    #[test]
    fn boundary_rho_values() {
        let (sys, rel) = full_row_rank_system(2, 3, 3, 2);
        let tol = Tolerance::default();
        let z = z_star(&sys.a);
        let zero = construct_k(&sys, &rel, z, 6, &tol).unwrap();
        assert_eq!(zero.assemble().norm(), 0.0);
        let one = construct_k(&sys, &rel, z, 5, &tol).unwrap().assemble();
        assert_eq!(crate::linalg::rank_tol(&one, &tol).unwrap(), 1);
    }

    #[test]
    fn below_floor_is_infeasible() {
        // F is 4x3 with rank 3, so rho must be at least n + q - 3 + 1 = 2.
        let (sys, rel) = full_row_rank_system(3, 3, 2, 1);
        let tol = Tolerance::default();
        let floor = feasibility_floor(&sys, &rel, &tol).unwrap();
        assert_eq!(floor, 2);
        let err = construct_k(&sys, &rel, 0.3, 1, &tol).unwrap_err();
        assert!(matches!(err, Error::InfeasibleRank { rho: 1, floor: 2 }));
        assert!(err.to_string().contains("feasible if and only if"));
    }

    #[test]
    fn violated_precondition_is_reported() {
        // A 1x1 system with D(z) = [[z - 1, -1], [0, 0]]: never full row rank.
        let sys = LinearSystem::new(
            Matrix::from_row_slice(1, 1, &[1.0]),
            Matrix::from_row_slice(1, 1, &[1.0]),
            Matrix::zeros(1, 1),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        let rel = ReleaseMap::identity(1);
        let err = construct_k(&sys, &rel, 0.0, 2, &Tolerance::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
    }

    #[test]
    fn unit_singular_values_bound() {
        // H = 0, Pi = I, unit-norm B and G = 1 at z = 0: both nonzero
        // singular values of D(z)^+ F equal one and the bound is rank(F) = 2.
        let sys = LinearSystem::new(
            Matrix::zeros(1, 1),
            Matrix::from_row_slice(1, 2, &[0.6, 0.8]),
            Matrix::from_row_slice(1, 1, &[1.0]),
            Matrix::zeros(1, 2),
        )
        .unwrap();
        let rel = ReleaseMap::identity(1);
        let tol = Tolerance::default();
        let prep = Prepared::new(&sys, &rel, 0.0, &tol).unwrap();
        assert_eq!(prep.rank_f, 2);
        for s in prep.svd.singular_values.iter().take(prep.rank_f) {
            assert!((s - 1.0).abs() < 1e-12, "{s}");
        }
        let b = upper_bound(&sys, &rel, 0.0, &tol).unwrap();
        assert!((b - 2.0).abs() < 1e-12, "{b}");
    }

    #[test]
    fn kernel_inheritance_and_unit_outer_products() {
        let (sys, rel) = full_row_rank_system(4, 3, 4, 2);
        let tol = Tolerance::default();
        let z = z_star(&sys.a);
        let base = null_space(&pencil(&sys, z), &tol).unwrap();
        assert_eq!(base.ncols(), 2);
        let f = f_matrix(&sys, &rel);
        let k = construct_k(&sys, &rel, z, 4, &tol).unwrap().assemble();
        let resid = (pencil(&sys, z) + &f * &k) * &base;
        assert!(resid.amax() <= 1e-8, "{}", resid.amax());

        let prep = Prepared::new(&sys, &rel, z, &tol).unwrap();
        let mut differs = false;
        for l in 0..prep.usable {
            let outer = prep.svd.v.column(l) * prep.svd.u.column(l).transpose();
            assert!((spectral_norm(&outer).unwrap() - 1.0).abs() < 1e-10);
            let l1: f64 = outer.iter().map(|v| v.abs()).sum();
            differs |= (l1 - 1.0).abs() > 1e-6;
        }
        assert!(differs);
    }

    #[test]
    fn tune_stops_immediately_when_already_protected() {
        // q < p leaves a kernel at every z; with a zero G the whole input space
        // is unobservable and protection holds from the first step.
        let (mut sys, rel) = full_row_rank_system(5, 2, 3, 1);
        sys.g = Matrix::zeros(1, 2);
        let t = TargetSpec::new(vec![], vec![1, 2]);
        let out = tune_rho(&sys, &rel, &t, &Tolerance::default()).unwrap();
        assert_eq!(out.stop, StopReason::AllProtected);
        assert_eq!(out.rho_final, 3);
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn tune_never_exceeds_n_plus_q_steps() {
        let (sys, rel) = full_row_rank_system(6, 3, 3, 2);
        let t = TargetSpec::all(3, 3);
        let out = tune_rho(&sys, &rel, &t, &Tolerance::default()).unwrap();
        assert!(out.history.len() <= 5);
        if out.not_achievable {
            assert_ne!(out.stop, StopReason::AllProtected);
        } else {
            assert!(out.result.protection.all_protected);
        }
        let mut buf = Vec::new();
        write_tune_csv(&out.history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("rho,pencil_rank,l2_objective,upper_bound,all_protected,seconds\n"));
    }

    #[test]
    fn sdp_spectral_epigraph_is_tight_for_fixed_k() {
        let (sys, rel) = full_row_rank_system(7, 2, 3, 2);
        let (prob, layout) = build_sdp_l2(&sys, &rel, &L2DesignConfig::new(3)).unwrap();
        prob.validate().unwrap();
        let hp = hstack(&[&sys.h, &rel.pi]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random(&mut rng, layout.rows, layout.cols);
        // Pin K and minimize t alone: the optimum is |[H, Pi] K|_2.
        let mut pinned = SdpProblem::new();
        let t = pinned.add_free("t");
        let q = sys.q();
        let size = q + layout.cols;
        let s = pinned.add_block(size, "spectral");
        let m = &hp * &k;
        for i in 0..size {
            pinned.add_equality(LinearForm::new().with_entry(s, i, i, 1.0).with_free(t, -1.0), 0.0);
            for j in i + 1..size {
                let rhs = if i < q && j >= q { m[(i, j - q)] } else { 0.0 };
                pinned.add_equality(LinearForm::new().with_entry(s, i, j, 1.0), rhs);
            }
        }
        pinned.objective = LinearForm::new().with_free(t, 1.0);
        let sol = sdp::solve(&pinned, &SolverOptions::default()).unwrap();
        let want = spectral_norm(&m).unwrap();
        assert!((sol.free_values[t] - want).abs() <= 1e-6 * (1.0 + want));
        assert_eq!(prob.psd_blocks[layout.spectral], size);
    }

    #[test]
    fn sdp_variant_runs() {
        let (sys, rel) = full_row_rank_system(8, 2, 3, 2);
        let mut cfg = L2DesignConfig::new(3);
        cfg.use_sdp_variant = true;
        let t = TargetSpec::all(2, 3);
        let res = design(&sys, &rel, &t, &cfg, 0).unwrap();
        let s = res.solver.unwrap();
        assert_eq!(s.status, Status::Optimal);
        let ksi = &res.k.k_si;
        assert!((ksi - ksi.transpose()).amax() < 1e-12);
    }
}
