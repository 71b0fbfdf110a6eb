//! Sparsity-seeking perturbation design through a convex relaxation.
//!
//! The rank constraint on the perturbed pencil is replaced by a nuclear-norm
//! penalty and the entry count of `K` by its ℓ1 norm. Invertibility of
//! `I + Ksi` (which keeps the perturbed pair controllable) is enforced through
//! the convex surrogate `(1 - eps) I + Ksi ⪰ 0` with `Ksi` symmetric.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::controllability::{
    corollary4_certificate, is_controllable, ControllabilityVerdict, Method,
};
use crate::error::{Error, Result};
use crate::linalg::{
    hstack, null_space, nuclear_norm, pinv, rank_at_scale, spectral_norm, Matrix, Tolerance, Vector,
};
use crate::model::{apply_perturbation, f_matrix, pencil, LinearSystem, Perturbation, ReleaseMap};
use crate::privacy::{protected_entries_at_scale, ProtectionReport, TargetSpec, DEFAULT_TRIALS};
use crate::sdp::{self, kkt_report, KktResiduals, LinearForm, SdpProblem, SolverOptions, Status};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L0DesignConfig {
    /// Weight of the nuclear-norm term.
    pub c: f64,
    /// Margin in `(1 - eps) I + Ksi ⪰ 0`.
    pub eps: f64,
    /// Optional rank target; the result reports whether `rank < rho` was met.
    pub rank_target: Option<usize>,
    pub tol: Tolerance,
    pub sdp_opts: SolverOptions,
    /// Re-fit the kept entries of `K` so that the numerical kernel becomes exact.
    pub polish: bool,
}

impl Default for L0DesignConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            eps: 0.1,
            rank_target: None,
            tol: sdp_tolerance(),
            sdp_opts: SolverOptions {
                max_iters: 150,
                ..SolverOptions::default()
            },
            polish: true,
        }
    }
}

/// Rank and threshold tolerances suited to interior-point output, which is
/// only accurate to a few digits below the solver tolerance.
pub fn sdp_tolerance() -> Tolerance {
    Tolerance {
        rank_tol: 1e-6,
        zero_tol: 1e-6,
    }
}

impl L0DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!("c must be positive, got {}", self.c)));
        }
        // eps >= 1 is still meaningful (Ksi ⪰ (eps - 1) I keeps I + Ksi
        // invertible), so only positivity is enforced.
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if self.eps >= 1.0 {
            log::warn!("eps = {} >= 1 forces Ksi to be positive semidefinite", self.eps);
        }
        Tolerance::new(self.tol.rank_tol, self.tol.zero_tol)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub l1: f64,
    /// Nuclear norm of the perturbed pencil at the design point.
    pub nuclear: f64,
    pub l0_count: usize,
    /// `|[H, Pi] K|_2`.
    pub l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsCertificate {
    pub eps: f64,
    pub holds: bool,
    pub min_eig: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: Status,
    pub iterations: usize,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub seconds: f64,
}

/// A designed perturbation together with everything needed to judge it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    /// Perturbation over the full input space. Rows and columns of control
    /// inputs are zero when the system declares a control partition.
    pub k: Perturbation,
    pub z: f64,
    pub rho: Option<usize>,
    pub objective: ObjectiveBreakdown,
    /// Rank of the perturbed pencil (exogenous inputs only) at `z`.
    pub pencil_rank: usize,
    /// Set when a rank target was given.
    pub rank_target_met: Option<bool>,
    pub upper_bound: Option<f64>,
    /// Input targets are reported with full-space indices. The witness vector,
    /// when present, lives in the `[x0; u_exogenous]` coordinates.
    pub protection: ProtectionReport,
    pub controllability: ControllabilityVerdict,
    pub certificate: Option<EpsCertificate>,
    pub solver: Option<SolverSummary>,
    pub seconds: f64,
}

impl DesignResult {
    /// The perturbed system over the exogenous inputs, the view an adversary
    /// who knows the control inputs works with.
    pub fn design_view(&self, sys: &LinearSystem, rel: &ReleaseMap) -> Result<LinearSystem> {
        Ok(apply_perturbation(sys, rel, &self.k)?.restrict_inputs(&sys.exogenous_indices()))
    }
}

/// Score a perturbation: rank, protection, controllability and norms.
pub(crate) fn evaluate(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    k: Perturbation,
    z: f64,
    targets: &TargetSpec,
    tol: &Tolerance,
    seed: u64,
) -> Result<DesignResult> {
    targets.validate(sys.n(), sys.p())?;
    let exo = sys.exogenous_indices();
    let ctrl = sys.control_indices();
    let perturbed = apply_perturbation(sys, rel, &k)?;
    let view = perturbed.restrict_inputs(&exo);

    // Input targets on control channels cannot be hidden: the adversary
    // knows those inputs.
    let mapped_inputs: Vec<usize> = targets
        .input_targets
        .iter()
        .filter_map(|j| exo.iter().position(|e| e == j))
        .collect();
    let mapped = TargetSpec::new(targets.state_targets.clone(), mapped_inputs);
    // Ranks are judged against the unperturbed pencil, so that a perturbation
    // cancelling it entirely reads as rank zero.
    let scale = spectral_norm(&pencil(&sys.restrict_inputs(&exo), z))?;
    let report = protected_entries_at_scale(&view, &mapped, z, tol, DEFAULT_TRIALS, seed, scale)?;
    let input_flags: Vec<(usize, bool)> = targets
        .input_targets
        .iter()
        .map(|&j| {
            let flag = exo
                .iter()
                .position(|&e| e == j)
                .and_then(|pos| report.input_flags.iter().find(|(i, _)| *i == pos))
                .map(|(_, f)| *f)
                .unwrap_or(false);
            (j, flag)
        })
        .collect();
    let blocked = input_flags.iter().any(|(_, f)| !f);
    let protection = ProtectionReport {
        all_protected: report.all_protected && !blocked && !targets.is_empty(),
        state_flags: report.state_flags,
        input_flags,
        witness_z: z,
        witness_vector: report.witness_vector,
        kernel_dim: report.kernel_dim,
    };

    let d = pencil(&view, z);
    let pencil_rank = rank_at_scale(&d, tol, scale)?;
    let b_ctrl = if ctrl.is_empty() {
        perturbed.b.clone()
    } else {
        perturbed.b.select_columns(&ctrl)
    };
    let controllability = is_controllable(&perturbed.a, &b_ctrl, tol, Method::KalmanRank)?;

    let km = k.assemble();
    let hp = hstack(&[&sys.h, &rel.pi]);
    let objective = ObjectiveBreakdown {
        l1: km.iter().map(|v| v.abs()).sum(),
        nuclear: nuclear_norm(&d)?,
        l0_count: l0_count(&km, tol),
        l2: spectral_norm(&(&hp * &km))?,
    };
    Ok(DesignResult {
        k,
        z,
        rho: None,
        objective,
        pencil_rank,
        rank_target_met: None,
        upper_bound: None,
        protection,
        controllability,
        certificate: None,
        solver: None,
        seconds: 0.0,
    })
}

/// Entries above `zero_tol * max(|K|_F, 1)`.
pub fn l0_count(k: &Matrix, tol: &Tolerance) -> usize {
    let cut = threshold_level(k, tol);
    k.iter().filter(|v| v.abs() > cut).count()
}

fn threshold_level(k: &Matrix, tol: &Tolerance) -> f64 {
    // The absolute floor lets a solution that is pure solver noise collapse
    // to exactly zero.
    tol.zero_tol * k.norm().max(1.0)
}

/// Zero out entries at or below the counting threshold.
pub fn hard_threshold(k: &Matrix, tol: &Tolerance) -> Matrix {
    let cut = threshold_level(k, tol);
    k.map(|v| if v.abs() > cut { v } else { 0.0 })
}

fn ensure_controllable(sys: &LinearSystem, tol: &Tolerance) -> Result<()> {
    let v = is_controllable(&sys.a, &sys.b, tol, Method::KalmanRank)?;
    if v.controllable {
        Ok(())
    } else {
        Err(Error::Uncontrollable {
            rank: v.rank,
            n: sys.n(),
        })
    }
}

/// Variable layout shared by the two SDP relaxations.
pub(crate) struct PencilBlocks {
    pub z: usize,
    pub nuclear: usize,
    pub eps_block: usize,
    /// Rows of the pencil, `n + q`.
    pub rows: usize,
}

/// Add `z`, the nuclear block tied to `D(z) + F K`, and the eps block tied to
/// `Ksi`. `k_form(r, c)` returns the linear form of entry `K[r][c]`.
pub(crate) fn add_pencil_blocks(
    prob: &mut SdpProblem,
    sys: &LinearSystem,
    rel: &ReleaseMap,
    eps: f64,
    k_form: &dyn Fn(usize, usize) -> LinearForm,
) -> PencilBlocks {
    let (n, p, q) = (sys.n(), sys.p(), sys.q());
    let rows = n + q;
    let cols = n + p;
    let f = f_matrix(sys, rel);
    let d0 = pencil(sys, 0.0);
    let z = prob.add_free("z");
    let nuclear = prob.add_block(rows + cols, "nuclear");
    for i in 0..rows {
        for j in 0..cols {
            // N[i, rows + j] - z E_ij - sum_r F_ir K_rj = D(0)_ij
            let mut form = LinearForm::new().with_entry(nuclear, i, rows + j, 1.0);
            if i == j && i < n {
                form.add_free(z, -1.0);
            }
            for r in 0..f.ncols() {
                let fir = f[(i, r)];
                if fir != 0.0 {
                    let kf = k_form(r, j);
                    for &(v, c) in &kf.free {
                        form.add_free(v, -fir * c);
                    }
                    for e in &kf.entries {
                        form.add_entry(e.block, e.row, e.col, -fir * e.coef);
                    }
                }
            }
            prob.add_equality(form, d0[(i, j)]);
        }
    }
    let eps_block = prob.add_block(p, "eps_block");
    for i in 0..p {
        for j in i..p {
            let mut form = LinearForm::new().with_entry(eps_block, i, j, 1.0);
            let kf = k_form(i, n + j);
            for &(v, c) in &kf.free {
                form.add_free(v, -c);
            }
            for e in &kf.entries {
                form.add_entry(e.block, e.row, e.col, -e.coef);
            }
            let rhs = if i == j { 1.0 - eps } else { 0.0 };
            prob.add_equality(form, rhs);
        }
    }
    PencilBlocks {
        z,
        nuclear,
        eps_block,
        rows,
    }
}

pub(crate) fn add_trace_objective(obj: &mut LinearForm, blocks: &PencilBlocks, size: usize, c: f64) {
    for i in 0..size {
        obj.add_entry(blocks.nuclear, i, i, c);
    }
}

/// Layout of the ℓ0 relaxation: entry `K[r][c] = b - a` with `a, b >= 0`
/// stored as 1x1 blocks, so `a + b` is an epigraph variable for `|K[r][c]|`.
#[derive(Debug, Clone)]
pub struct L0Layout {
    pub rows: usize,
    pub cols: usize,
    /// `(a_block, b_block)` per entry, row-major.
    pub splits: Vec<(usize, usize)>,
    pub z: usize,
    pub nuclear: usize,
    pub eps_block: usize,
}

impl L0Layout {
    pub fn k_form(&self, r: usize, c: usize) -> LinearForm {
        let (a, b) = self.splits[r * self.cols + c];
        LinearForm::new().with_entry(b, 0, 0, 1.0).with_entry(a, 0, 0, -1.0)
    }

    pub fn extract_k(&self, sol: &sdp::SdpSolution) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |r, c| sol.value(&self.k_form(r, c)))
    }
}

/// SDP relaxation of the sparsest rank-reducing perturbation.
pub fn build_sdp_l0(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    cfg: &L0DesignConfig,
) -> Result<(SdpProblem, L0Layout)> {
    sys.validate()?;
    rel.validate(sys)?;
    cfg.validate()?;
    ensure_controllable(sys, &cfg.tol)?;
    let (n, p, l) = (sys.n(), sys.p(), rel.l());
    let (kr, kc) = (p + l, n + p);
    let mut prob = SdpProblem::new();
    let mut splits = Vec::with_capacity(kr * kc);
    for r in 0..kr {
        for c in 0..kc {
            let a = prob.add_block(1, format!("kneg[{r},{c}]"));
            let b = prob.add_block(1, format!("kpos[{r},{c}]"));
            splits.push((a, b));
        }
    }
    let mut layout = L0Layout {
        rows: kr,
        cols: kc,
        splits,
        z: 0,
        nuclear: 0,
        eps_block: 0,
    };
    let blocks = add_pencil_blocks(&mut prob, sys, rel, cfg.eps, &|r, c| layout.k_form(r, c));
    layout.z = blocks.z;
    layout.nuclear = blocks.nuclear;
    layout.eps_block = blocks.eps_block;

    // Ksi symmetric.
    for i in 0..p {
        for j in i + 1..p {
            let mut form = layout.k_form(i, n + j);
            for e in layout.k_form(j, n + i).entries {
                form.add_entry(e.block, e.row, e.col, -e.coef);
            }
            prob.add_equality(form, 0.0);
        }
    }

    let mut obj = LinearForm::new();
    for &(a, b) in &layout.splits {
        obj.add_entry(a, 0, 0, 1.0);
        obj.add_entry(b, 0, 0, 1.0);
    }
    add_trace_objective(&mut obj, &blocks, blocks.rows + kc, cfg.c);
    prob.objective = obj;
    Ok((prob, layout))
}

/// Least-change correction of the kept entries of `K` that makes the
/// numerical kernel of `D(z) + F K` exact.
///
/// Interior-point output leaves the small singular values of the perturbed
/// pencil at roughly the solver tolerance. Re-fitting the nonzero entries
/// (with `Ksi` kept symmetric) removes that residual without touching the
/// sparsity pattern. Returns `None` when the fit does not reduce the residual.
pub fn kernel_polish(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    k: &Matrix,
    z: f64,
    tol: &Tolerance,
) -> Result<Option<Matrix>> {
    let (n, p) = (sys.n(), sys.p());
    let f = f_matrix(sys, rel);
    let d = pencil(sys, z);
    let perturbed = &d + &f * k;
    let basis = null_space(&perturbed, tol)?;
    let kdim = basis.ncols();
    if kdim == 0 {
        return Ok(None);
    }
    let resid = &perturbed * &basis;
    let before = resid.norm();
    if before == 0.0 {
        return Ok(None);
    }

    // Parameter groups: one entry, or a mirrored pair inside Ksi.
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for r in 0..k.nrows() {
        for c in 0..k.ncols() {
            if k[(r, c)] == 0.0 {
                continue;
            }
            let in_ksi = r < p && c >= n;
            if in_ksi {
                let (i, j) = (r, c - n);
                if i < j {
                    groups.push(vec![(i, n + j), (j, n + i)]);
                } else if i == j {
                    groups.push(vec![(r, c)]);
                }
                // i > j is covered by its mirror.
            } else {
                groups.push(vec![(r, c)]);
            }
        }
    }
    if groups.is_empty() {
        return Ok(None);
    }
    let rows = perturbed.nrows();
    // Column g of the system: vec(F E_g basis) where E_g is the group's indicator.
    let mut sysm = Matrix::zeros(rows * kdim, groups.len());
    for (g, grp) in groups.iter().enumerate() {
        for &(r, c) in grp {
            for t in 0..kdim {
                let w = basis[(c, t)];
                if w == 0.0 {
                    continue;
                }
                for i in 0..rows {
                    sysm[(t * rows + i, g)] += f[(i, r)] * w;
                }
            }
        }
    }
    let rhs = Vector::from_iterator(rows * kdim, resid.iter().map(|v| -v));
    let fine = Tolerance {
        rank_tol: 1e-12,
        zero_tol: tol.zero_tol,
    };
    let delta = pinv(&sysm, &fine)? * rhs;
    let mut out = k.clone();
    for (g, grp) in groups.iter().enumerate() {
        for &(r, c) in grp {
            out[(r, c)] += delta[g];
        }
    }
    let after = ((&d + &f * &out) * &basis).norm();
    if after < before {
        log::debug!("kernel polish: residual {before:e} -> {after:e}");
        Ok(Some(out))
    } else {
        Ok(None)
    }
}

/// Solve the ℓ0 relaxation and verify the resulting perturbation.
///
/// When the system declares control inputs, the design runs on the exogenous
/// inputs only and control rows and columns of `K` stay zero.
pub fn design(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    targets: &TargetSpec,
    cfg: &L0DesignConfig,
    seed: u64,
) -> Result<DesignResult> {
    let start = Instant::now();
    sys.validate()?;
    rel.validate(sys)?;
    ensure_controllable(sys, &cfg.tol)?;
    let exo = sys.exogenous_indices();
    let view = sys.exogenous_part();
    let (prob, layout) = build_sdp_l0(&view, rel, cfg)?;
    let solve_start = Instant::now();
    let sol = sdp::solve(&prob, &cfg.sdp_opts)?;
    let solve_seconds = solve_start.elapsed().as_secs_f64();
    match sol.status {
        Status::Optimal => {}
        Status::MaxIters => log::warn!(
            "ℓ0 relaxation stopped at the iteration limit (kkt {:?})",
            sol.kkt
        ),
        other => {
            return Err(Error::Solver(format!(
                "ℓ0 relaxation finished with status {other:?}"
            )))
        }
    }
    let z = sol.free_values[layout.z];
    let mut km = hard_threshold(&layout.extract_k(&sol), &cfg.tol);
    if cfg.polish {
        if let Some(polished) = kernel_polish(&view, rel, &km, z, &cfg.tol)? {
            // The fit ignores the eps constraint, so it can drive `I + Ksi`
            // singular. Keep it only when the certificate survives.
            let (n, p) = (view.n(), view.p());
            let k_si = polished.view((0, n), (p, p)).into_owned();
            if corollary4_certificate(&k_si, cfg.eps, &cfg.tol).0 {
                km = polished;
            } else {
                log::debug!("kernel polish discarded: it breaks the eps certificate");
            }
        }
    }
    let (n, p, l) = (view.n(), view.p(), rel.l());
    let k_view = Perturbation::from_assembled(&km, n, p, l)?;
    let (holds, min_eig) = corollary4_certificate(&k_view.k_si, cfg.eps, &cfg.tol);
    let k = k_view.embed_inputs(&exo, sys.p());
    let mut res = evaluate(sys, rel, k, z, targets, &cfg.tol, seed)?;
    res.rank_target_met = cfg.rank_target.map(|rho| res.pencil_rank < rho);
    res.rho = cfg.rank_target;
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

/// One row of a `c` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    pub pencil_rank: Option<usize>,
    pub l0_count: Option<usize>,
    pub l1_value: Option<f64>,
    pub nuclear_value: Option<f64>,
    pub controllable: Option<bool>,
    pub all_protected: Option<bool>,
    pub solve_seconds: f64,
    /// Set when the design at this `c` failed.
    pub error: Option<String>,
}

/// Run [`design`] for every `c` in an ascending grid. Failures are recorded
/// in their row and the sweep continues.
pub fn sweep_c(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    targets: &TargetSpec,
    c_grid: &[f64],
    eps: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    sweep_c_with(sys, rel, targets, c_grid, &L0DesignConfig { eps, ..Default::default() }, seed)
}

/// [`sweep_c`] with every other setting taken from `base`.
pub fn sweep_c_with(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    targets: &TargetSpec,
    c_grid: &[f64],
    base: &L0DesignConfig,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    Ok(sweep_c_designs(sys, rel, targets, c_grid, base, seed, 1)?
        .into_iter()
        .map(|(row, _)| row)
        .collect())
}

/// Sweep that also hands back each successful design.
///
/// Grid points are spread over `jobs` threads. The design at grid index `i`
/// uses seed `seed + i` whatever the thread count, so results do not depend
/// on `jobs`.
pub fn sweep_c_designs(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    targets: &TargetSpec,
    c_grid: &[f64],
    base: &L0DesignConfig,
    seed: u64,
    jobs: usize,
) -> Result<Vec<(SweepRow, Option<DesignResult>)>> {
    if c_grid.is_empty() {
        return Err(Error::InvalidArgument("c grid is empty".into()));
    }
    if c_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("c grid must be strictly ascending".into()));
    }
    let run = |i: usize| {
        let c = c_grid[i];
        let cfg = L0DesignConfig { c, ..*base };
        let start = Instant::now();
        let out = match design(sys, rel, targets, &cfg, seed.wrapping_add(i as u64)) {
            Ok(r) => (
                SweepRow {
                    c,
                    pencil_rank: Some(r.pencil_rank),
                    l0_count: Some(r.objective.l0_count),
                    l1_value: Some(r.objective.l1),
                    nuclear_value: Some(r.objective.nuclear),
                    controllable: Some(r.controllability.controllable),
                    all_protected: Some(r.protection.all_protected),
                    solve_seconds: r.solver.map(|s| s.seconds).unwrap_or(r.seconds),
                    error: None,
                },
                Some(r),
            ),
            Err(e) => {
                log::error!("design at c = {c} failed: {e}");
                (
                    SweepRow {
                        c,
                        pencil_rank: None,
                        l0_count: None,
                        l1_value: None,
                        nuclear_value: None,
                        controllable: None,
                        all_protected: None,
                        solve_seconds: start.elapsed().as_secs_f64(),
                        error: Some(e.to_string()),
                    },
                    None,
                )
            }
        };
        log::info!(
            "c = {c}: rank {:?}, l0 {:?}, {:.2}s",
            out.0.pencil_rank,
            out.0.l0_count,
            out.0.solve_seconds
        );
        out
    };
    let jobs = jobs.clamp(1, c_grid.len());
    if jobs == 1 {
        return Ok((0..c_grid.len()).map(run).collect());
    }
    let mut slots: Vec<Option<(SweepRow, Option<DesignResult>)>> = vec![None; c_grid.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|t| {
                let run = &run;
                scope.spawn(move || {
                    (t..c_grid.len())
                        .step_by(jobs)
                        .map(|i| (i, run(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, out) in h.join().expect("sweep worker panicked") {
                slots[i] = Some(out);
            }
        }
    });
    Ok(slots.into_iter().map(|s| s.expect("every grid point ran")).collect())
}

/// CSV with header `c,pencil_rank,l0_count,l1_value,nuclear_value,controllable,all_protected,solve_seconds`.
/// Failed rows leave the measured columns empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "c",
        "pencil_rank",
        "l0_count",
        "l1_value",
        "nuclear_value",
        "controllable",
        "all_protected",
        "solve_seconds",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        w.write_record([
            crate::io::fmt_num(r.c),
            opt(r.pencil_rank.map(|v| v.to_string())),
            opt(r.l0_count.map(|v| v.to_string())),
            opt(r.l1_value.map(crate::io::fmt_num)),
            opt(r.nuclear_value.map(crate::io::fmt_num)),
            opt(r.controllable.map(|v| v.to_string())),
            opt(r.all_protected.map(|v| v.to_string())),
            crate::io::fmt_num(r.solve_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}
