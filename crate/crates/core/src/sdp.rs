//! A dense primal-dual interior-point solver for small block SDPs.
//!
//! The primal problem is
//!
//! ```text
//! minimize    c_f^T x + sum_j <C_j, X_j>
//! subject to  A_f x + A(X) = b,   X_j PSD,   x free
//! ```
//!
//! and the dual is `maximize b^T y` subject to `A_f^T y = c_f` and
//! `Z_j = C_j - A_j^*(y)` PSD. Iterations use the HKM search direction with a
//! Mehrotra predictor-corrector, an infeasible start, and a dense Cholesky
//! factorisation of the Schur complement. Free variables are split into two
//! nonnegative parts whose common part is removed after every step, which
//! keeps the Schur complement positive definite near the optimum.
//!
//! Blocks of size 1 are treated internally as nonnegative scalars, which is
//! how linear inequalities enter a model.

use faer::linalg::solvers::Solve;
use nalgebra::{Cholesky, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// One term `coef * X[row][col]` of a linear form.
///
/// `X` is symmetric, so `(row, col)` and `(col, row)` name the same variable.
/// An off-diagonal term is counted once, not twice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearForm {
    pub free: Vec<(usize, f64)>,
    pub entries: Vec<BlockEntry>,
}

impl LinearForm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_free(mut self, var: usize, coef: f64) -> Self {
        self.add_free(var, coef);
        self
    }

    pub fn with_entry(mut self, block: usize, row: usize, col: usize, coef: f64) -> Self {
        self.add_entry(block, row, col, coef);
        self
    }

    pub fn add_free(&mut self, var: usize, coef: f64) {
        if coef != 0.0 {
            self.free.push((var, coef));
        }
    }

    pub fn add_entry(&mut self, block: usize, row: usize, col: usize, coef: f64) {
        if coef != 0.0 {
            self.entries.push(BlockEntry {
                block,
                row,
                col,
                coef,
            });
        }
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty() && self.entries.is_empty()
    }

    /// Value of the form at the given free values and block matrices.
    pub fn eval(&self, free: &[f64], blocks: &[Matrix]) -> f64 {
        let f: f64 = self.free.iter().map(|&(i, c)| c * free[i]).sum();
        let e: f64 = self
            .entries
            .iter()
            .map(|e| e.coef * blocks[e.block][(e.row, e.col)])
            .sum();
        f + e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub form: LinearForm,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariableNames {
    pub free: Vec<String>,
    pub blocks: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub free_vars: usize,
    pub psd_blocks: Vec<usize>,
    pub objective: LinearForm,
    pub equalities: Vec<Equality>,
    pub variable_names: VariableNames,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> usize {
        self.free_vars += 1;
        self.variable_names.free.push(name.into());
        self.free_vars - 1
    }

    pub fn add_block(&mut self, size: usize, name: impl Into<String>) -> usize {
        self.psd_blocks.push(size);
        self.variable_names.blocks.push(name.into());
        self.psd_blocks.len() - 1
    }

    pub fn add_equality(&mut self, form: LinearForm, rhs: f64) {
        self.equalities.push(Equality { form, rhs });
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.psd_blocks.contains(&0) {
            return bad("PSD blocks must have size at least 1".into());
        }
        if self.equalities.is_empty() {
            return bad("problem has no equality constraints".into());
        }
        let check = |form: &LinearForm, what: &str| -> Result<()> {
            for &(i, c) in &form.free {
                if i >= self.free_vars || !c.is_finite() {
                    return bad(format!("{what}: bad free variable term ({i}, {c})"));
                }
            }
            for e in &form.entries {
                let ok = e.block < self.psd_blocks.len()
                    && e.row < self.psd_blocks[e.block]
                    && e.col < self.psd_blocks[e.block]
                    && e.coef.is_finite();
                if !ok {
                    return bad(format!("{what}: bad block term {e:?}"));
                }
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (k, eq) in self.equalities.iter().enumerate() {
            if eq.form.is_empty() {
                return bad(format!("equality {k} touches no variable"));
            }
            if !eq.rhs.is_finite() {
                return bad(format!("equality {k} has a non-finite right-hand side"));
            }
            check(&eq.form, &format!("equality {k}"))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iters: 100,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIters,
    NumericalFailure,
}

/// Relative residuals: primal and dual infeasibility and duality gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// `y` with `A_f^T y = 0`, `-A^*(y)` PSD and `b^T y = 1`.
    PrimalInfeasible,
    /// `(x, X)` with `A_f x + A(X) = 0`, `X` PSD and objective `-1`.
    DualInfeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: Status,
    pub free_values: Vec<f64>,
    pub block_values: Vec<Matrix>,
    pub dual_y: Vec<f64>,
    pub dual_blocks: Vec<Matrix>,
    pub objective_value: f64,
    pub dual_objective: f64,
    pub kkt: KktResiduals,
    pub iterations: usize,
    /// `|r_p| + |r_d| + <X, Z>` after each accepted step.
    pub merit_history: Vec<f64>,
    pub certificate: Option<CertificateKind>,
}

impl SdpSolution {
    pub fn value(&self, form: &LinearForm) -> f64 {
        form.eval(&self.free_values, &self.block_values)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Recompute residuals of a solution directly from the problem data.
pub fn kkt_report(prob: &SdpProblem, sol: &SdpSolution) -> KktResiduals {
    let nb = prob.psd_blocks.len();
    let x = &sol.free_values;
    let xs = &sol.block_values;
    let y = &sol.dual_y;

    let mut rp2 = 0.0;
    let mut b2 = 0.0;
    for eq in &prob.equalities {
        let r = eq.rhs - eq.form.eval(x, xs);
        rp2 += r * r;
        b2 += eq.rhs * eq.rhs;
    }

    // Dual slack implied by y, compared with the reported Z.
    let mut cf = vec![0.0; prob.free_vars];
    let mut cm: Vec<Matrix> = prob.psd_blocks.iter().map(|&s| Matrix::zeros(s, s)).collect();
    add_form_sym(&prob.objective, 1.0, &mut cf, &mut cm);
    let c_norm = (cf.iter().map(|v| v * v).sum::<f64>()
        + cm.iter().map(|m| m.norm_squared()).sum::<f64>())
    .sqrt();
    for (eq, &yi) in prob.equalities.iter().zip(y) {
        add_form_sym(&eq.form, -yi, &mut cf, &mut cm);
    }
    let mut rd2: f64 = cf.iter().map(|v| v * v).sum();
    for j in 0..nb {
        rd2 += (&cm[j] - &sol.dual_blocks[j]).norm_squared();
    }

    let pobj = prob.objective.eval(x, xs);
    let dobj: f64 = prob.equalities.iter().zip(y).map(|(e, yi)| e.rhs * yi).sum();
    KktResiduals {
        primal_res: rp2.sqrt() / (1.0 + b2.sqrt()),
        dual_res: rd2.sqrt() / (1.0 + c_norm),
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
    }
}

/// Accumulate `scale * form` as a symmetric matrix per block plus a free-variable vector.
fn add_form_sym(form: &LinearForm, scale: f64, free: &mut [f64], blocks: &mut [Matrix]) {
    for &(i, c) in &form.free {
        free[i] += scale * c;
    }
    for e in &form.entries {
        let m = &mut blocks[e.block];
        if e.row == e.col {
            m[(e.row, e.row)] += scale * e.coef;
        } else {
            m[(e.row, e.col)] += 0.5 * scale * e.coef;
            m[(e.col, e.row)] += 0.5 * scale * e.coef;
        }
    }
}

/// Symmetric piece `value` at `(row, col)` of a constraint matrix.
#[derive(Debug, Clone, Copy)]
struct Piece {
    row: usize,
    col: usize,
    value: f64,
}

/// Constraint data restricted to one semidefinite block.
struct SdBlock {
    size: usize,
    /// `(constraint index, symmetric pieces)` for every constraint touching the block.
    cons: Vec<(usize, Vec<Piece>)>,
    c: Matrix,
    total_pieces: usize,
}

/// The problem rewritten with 1x1 blocks pulled out as nonnegative scalars.
struct Compiled {
    m: usize,
    nf: usize,
    b: Vector,
    /// `A_f`, dense `m x nf`.
    af: Matrix,
    cf: Vector,
    /// Per LP variable: `(constraint, coefficient)` pairs.
    lp_cols: Vec<Vec<(usize, f64)>>,
    c_lp: Vector,
    sd: Vec<SdBlock>,
    /// Where each original block lives: `Ok(lp index)` or `Err(sd index)`.
    block_map: Vec<std::result::Result<usize, usize>>,
}

impl Compiled {
    /// Indices of a maximal linearly independent set of free-variable
    /// columns of `A_f`, by modified Gram-Schmidt in column order.
    fn independent_free(&self) -> Vec<usize> {
        let mut basis: Vec<Vector> = Vec::new();
        let mut keep = Vec::new();
        for j in 0..self.nf {
            let col = self.af.column(j).into_owned();
            let norm = col.norm();
            if norm == 0.0 {
                continue;
            }
            let mut r = col;
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&r);
                    r.axpy(-c, q, 1.0);
                }
            }
            let rn = r.norm();
            if rn > 1e-10 * norm {
                basis.push(r / rn);
                keep.push(j);
            }
        }
        keep
    }

    /// Keep only the listed free variables.
    fn restrict_free(&mut self, keep: &[usize]) {
        self.af = self.af.select_columns(keep);
        self.cf = Vector::from_iterator(keep.len(), keep.iter().map(|&j| self.cf[j]));
        self.nf = keep.len();
    }

    /// Replace every free variable by a difference of two nonnegative
    /// scalars. Returns the LP indices of each `(positive, negative)` pair.
    fn split_free(&mut self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::with_capacity(self.nf);
        let mut c_lp: Vec<f64> = self.c_lp.iter().cloned().collect();
        for j in 0..self.nf {
            let col: Vec<(usize, f64)> = (0..self.m)
                .filter(|&k| self.af[(k, j)] != 0.0)
                .map(|k| (k, self.af[(k, j)]))
                .collect();
            let pos = self.lp_cols.len();
            self.lp_cols.push(col.clone());
            self.lp_cols.push(col.into_iter().map(|(k, a)| (k, -a)).collect());
            c_lp.push(self.cf[j]);
            c_lp.push(-self.cf[j]);
            pairs.push((pos, pos + 1));
        }
        self.c_lp = Vector::from_vec(c_lp);
        self.af = Matrix::zeros(self.m, 0);
        self.cf = Vector::zeros(0);
        self.nf = 0;
        pairs
    }

    fn new(prob: &SdpProblem) -> Self {
        let m = prob.equalities.len();
        let nf = prob.free_vars;
        let mut block_map = Vec::with_capacity(prob.psd_blocks.len());
        let (mut n_lp, mut n_sd) = (0, 0);
        for &s in &prob.psd_blocks {
            if s == 1 {
                block_map.push(Ok(n_lp));
                n_lp += 1;
            } else {
                block_map.push(Err(n_sd));
                n_sd += 1;
            }
        }
        let mut sd: Vec<SdBlock> = prob
            .psd_blocks
            .iter()
            .filter(|&&s| s > 1)
            .map(|&s| SdBlock {
                size: s,
                cons: Vec::new(),
                c: Matrix::zeros(s, s),
                total_pieces: 0,
            })
            .collect();
        let mut lp_cols = vec![Vec::new(); n_lp];
        let mut c_lp = Vector::zeros(n_lp);
        let mut cf = Vector::zeros(nf);
        let mut af = Matrix::zeros(m, nf);
        let b = Vector::from_iterator(m, prob.equalities.iter().map(|e| e.rhs));

        for &(i, c) in &prob.objective.free {
            cf[i] += c;
        }
        for e in &prob.objective.entries {
            match block_map[e.block] {
                Ok(k) => c_lp[k] += e.coef,
                Err(s) => {
                    let c = &mut sd[s].c;
                    if e.row == e.col {
                        c[(e.row, e.row)] += e.coef;
                    } else {
                        c[(e.row, e.col)] += 0.5 * e.coef;
                        c[(e.col, e.row)] += 0.5 * e.coef;
                    }
                }
            }
        }

        for (k, eq) in prob.equalities.iter().enumerate() {
            for &(i, c) in &eq.form.free {
                af[(k, i)] += c;
            }
            let mut per_block: Vec<Vec<Piece>> = vec![Vec::new(); n_sd];
            for e in &eq.form.entries {
                match block_map[e.block] {
                    Ok(j) => lp_cols[j].push((k, e.coef)),
                    Err(s) => {
                        if e.row == e.col {
                            per_block[s].push(Piece {
                                row: e.row,
                                col: e.row,
                                value: e.coef,
                            });
                        } else {
                            per_block[s].push(Piece {
                                row: e.row,
                                col: e.col,
                                value: 0.5 * e.coef,
                            });
                            per_block[s].push(Piece {
                                row: e.col,
                                col: e.row,
                                value: 0.5 * e.coef,
                            });
                        }
                    }
                }
            }
            for (s, pieces) in per_block.into_iter().enumerate() {
                if !pieces.is_empty() {
                    sd[s].total_pieces += pieces.len();
                    sd[s].cons.push((k, pieces));
                }
            }
        }
        // Merge repeated LP coefficients within one constraint.
        for col in &mut lp_cols {
            col.sort_by_key(|&(k, _)| k);
            col.dedup_by(|a, b| {
                if a.0 == b.0 {
                    b.1 += a.1;
                    true
                } else {
                    false
                }
            });
        }
        Self {
            m,
            nf,
            b,
            af,
            cf,
            lp_cols,
            c_lp,
            sd,
            block_map,
        }
    }

    fn nu(&self) -> f64 {
        (self.lp_cols.len() + self.sd.iter().map(|s| s.size).sum::<usize>()) as f64
    }

    /// `A(X)` over the cone variables.
    fn apply(&self, x_lp: &Vector, xs: &[Matrix]) -> Vector {
        let mut out = Vector::zeros(self.m);
        for (j, col) in self.lp_cols.iter().enumerate() {
            for &(k, a) in col {
                out[k] += a * x_lp[j];
            }
        }
        for (s, blk) in self.sd.iter().enumerate() {
            for (k, pieces) in &blk.cons {
                out[*k] += pieces
                    .iter()
                    .map(|p| p.value * xs[s][(p.row, p.col)])
                    .sum::<f64>();
            }
        }
        out
    }

    /// `A^*(y)` split into the LP part and symmetric block parts.
    fn adjoint(&self, y: &Vector) -> (Vector, Vec<Matrix>) {
        let lp = Vector::from_iterator(
            self.lp_cols.len(),
            self.lp_cols
                .iter()
                .map(|col| col.iter().map(|&(k, a)| a * y[k]).sum::<f64>()),
        );
        let sd = self
            .sd
            .iter()
            .map(|blk| {
                let mut m = Matrix::zeros(blk.size, blk.size);
                for (k, pieces) in &blk.cons {
                    for p in pieces {
                        m[(p.row, p.col)] += p.value * y[*k];
                    }
                }
                m
            })
            .collect();
        (lp, sd)
    }

    /// Schur complement `M_ij = <A_i, X A_j Z^-1>` plus the LP part.
    fn schur(&self, x_lp: &Vector, z_lp: &Vector, xs: &[Matrix], zinv: &[Matrix]) -> Matrix {
        let m = self.m;
        let mut mm = Matrix::zeros(m, m);
        for (j, col) in self.lp_cols.iter().enumerate() {
            let d = x_lp[j] / z_lp[j];
            for &(a, va) in col {
                for &(b, vb) in col {
                    mm[(a, b)] += d * va * vb;
                }
            }
        }
        for (s, blk) in self.sd.iter().enumerate() {
            let x = &xs[s];
            let zi = &zinv[s];
            let n = blk.size;
            let dense_fixed = (n * n * n) as f64;
            for (jpos, (j, pj)) in blk.cons.iter().enumerate() {
                let pair_cost = 2.0 * (pj.len() * blk.total_pieces) as f64;
                let dense_cost = dense_fixed + (pj.len() * n + blk.total_pieces) as f64;
                if pair_cost <= dense_cost {
                    for (i, pi) in &blk.cons[..=jpos] {
                        let mut acc = 0.0;
                        for a in pi {
                            for b in pj {
                                // tr(A_i X A_j Z^-1) with A_i[a.row, a.col], A_j[b.row, b.col]
                                acc += a.value * b.value * x[(a.col, b.row)] * zi[(b.col, a.row)];
                            }
                        }
                        mm[(*i, *j)] += acc;
                        if i != j {
                            mm[(*j, *i)] += acc;
                        }
                    }
                } else {
                    let mut ajz = Matrix::zeros(n, n);
                    for b in pj {
                        let row = zi.row(b.col) * b.value;
                        let mut dst = ajz.row_mut(b.row);
                        dst += row;
                    }
                    let g = x * ajz;
                    for (i, pi) in &blk.cons[..=jpos] {
                        let acc: f64 = pi.iter().map(|a| a.value * g[(a.col, a.row)]).sum();
                        mm[(*i, *j)] += acc;
                        if i != j {
                            mm[(*j, *i)] += acc;
                        }
                    }
                }
            }
        }
        mm
    }
}

struct Factor {
    llt: faer::linalg::solvers::Llt<f64>,
    m: usize,
}

impl Factor {
    fn new(mm: &Matrix) -> Option<Self> {
        let m = mm.nrows();
        let scale = (0..m).map(|i| mm[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut shift = 0.0;
        for _ in 0..8 {
            let fm = faer::Mat::<f64>::from_fn(m, m, |i, j| {
                mm[(i, j)] + if i == j { shift } else { 0.0 }
            });
            if let Ok(llt) = fm.llt(faer::Side::Lower) {
                return Some(Self { llt, m });
            }
            shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
        }
        None
    }

    fn solve(&self, rhs: &Matrix) -> Matrix {
        let mut f = faer::Mat::<f64>::from_fn(self.m, rhs.ncols(), |i, j| rhs[(i, j)]);
        self.llt.solve_in_place(f.as_mut());
        Matrix::from_fn(self.m, rhs.ncols(), |i, j| f[(i, j)])
    }

    fn solve_vec(&self, rhs: &Vector) -> Vector {
        let m = Matrix::from_column_slice(self.m, 1, rhs.as_slice());
        self.solve(&m).column(0).into_owned()
    }
}

/// Search direction in all variables.
struct Direction {
    dy: Vector,
    dx_lp: Vector,
    dz_lp: Vector,
    dxs: Vec<Matrix>,
    dzs: Vec<Matrix>,
}

#[derive(Clone)]
struct Iterate {
    y: Vector,
    x_lp: Vector,
    z_lp: Vector,
    xs: Vec<Matrix>,
    zs: Vec<Matrix>,
}

/// Largest `alpha` with `x + alpha dx >= 0` (unbounded gives `f64::INFINITY`).
fn max_step_lp(x: &Vector, dx: &Vector) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

/// Largest `alpha` with `X + alpha dX` PSD, via the eigenvalues of `L^-1 dX L^-T`.
fn max_step_sd(x: &Matrix, dx: &Matrix) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let t = l.solve_lower_triangular(dx)?;
    let t = l.solve_lower_triangular(&t.transpose())?;
    let t = (&t + t.transpose()) * 0.5;
    let lmin = SymmetricEigen::new(t)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn sym(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

fn inner(a: &Matrix, b: &Matrix) -> f64 {
    a.component_mul(b).sum()
}

/// Solve the problem. The iteration is deterministic, so no seed is needed.
pub fn solve(prob: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    prob.validate()?;
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(Error::InvalidArgument(
            "solver tolerance must be positive and max_iters at least 1".into(),
        ));
    }
    let mut cp = Compiled::new(prob);
    // Free variables whose columns of A_f are linearly dependent move along
    // directions that no constraint sees. They are fixed at zero here and
    // checked against the objective after the solve.
    let full_af = cp.af.clone();
    let full_cf = cp.cf.clone();
    let kept_free = cp.independent_free();
    let dropped_free = kept_free.len() < cp.nf;
    if dropped_free {
        log::debug!(
            "{} of {} free variables are linearly dependent and fixed at zero",
            cp.nf - kept_free.len(),
            cp.nf
        );
        cp.restrict_free(&kept_free);
    }
    let splits = cp.split_free();
    let nu = cp.nu();
    let n_lp = cp.lp_cols.len();
    let b_norm = cp.b.norm();
    let c_norm = (cp.c_lp.norm_squared()
        + cp.sd.iter().map(|s| s.c.norm_squared()).sum::<f64>())
    .sqrt();

    // Infeasible starting point scaled to the data.
    let mut row_norms = vec![0.0f64; cp.m];
    for (j, col) in cp.lp_cols.iter().enumerate() {
        let _ = j;
        for &(k, a) in col {
            row_norms[k] += a * a;
        }
    }
    for blk in &cp.sd {
        for (k, pieces) in &blk.cons {
            row_norms[*k] += pieces.iter().map(|p| p.value * p.value).sum::<f64>();
        }
    }
    let row_norms: Vec<f64> = row_norms.into_iter().map(f64::sqrt).collect();
    let mut xi: f64 = 10.0;
    let mut eta: f64 = 10.0;
    for k in 0..cp.m {
        xi = xi.max((1.0 + cp.b[k].abs()) / (1.0 + row_norms[k]));
        eta = eta.max(row_norms[k]);
    }
    let max_size = cp.sd.iter().map(|s| s.size).max().unwrap_or(1) as f64;
    xi *= max_size.sqrt();
    eta = eta.max(c_norm / nu.sqrt().max(1.0));

    let mut it = Iterate {
        y: Vector::zeros(cp.m),
        x_lp: Vector::from_element(n_lp, xi),
        z_lp: Vector::from_element(n_lp, eta),
        xs: cp
            .sd
            .iter()
            .map(|s| Matrix::identity(s.size, s.size) * xi)
            .collect(),
        zs: cp
            .sd
            .iter()
            .map(|s| Matrix::identity(s.size, s.size) * eta)
            .collect(),
    };

    let mut merit_history = Vec::new();
    let mut status = Status::MaxIters;
    let mut certificate = None;
    let mut iterations = 0;
    let mut last_step = 1.0f64;
    // Best iterate seen so far by its worst relative residual. Runs that end
    // early report this one instead of the last.
    let mut best: Option<(f64, Iterate)> = None;

    loop {
        // Residuals at the current iterate.
        let ax = cp.apply(&it.x_lp, &it.xs);
        let r_p = &cp.b - ax;
        let (aty_lp, aty_sd) = cp.adjoint(&it.y);
        let rd_lp = &cp.c_lp - aty_lp - &it.z_lp;
        let rd_sd: Vec<Matrix> = (0..cp.sd.len())
            .map(|s| &cp.sd[s].c - &aty_sd[s] - &it.zs[s])
            .collect();
        let rd_norm = (rd_lp.norm_squared()
            + rd_sd.iter().map(|m| m.norm_squared()).sum::<f64>())
        .sqrt();
        let xz = it.x_lp.dot(&it.z_lp)
            + (0..cp.sd.len())
                .map(|s| inner(&it.xs[s], &it.zs[s]))
                .sum::<f64>();
        let pobj = cp.c_lp.dot(&it.x_lp)
            + (0..cp.sd.len())
                .map(|s| inner(&cp.sd[s].c, &it.xs[s]))
                .sum::<f64>();
        let dobj = cp.b.dot(&it.y);
        let relp = r_p.norm() / (1.0 + b_norm);
        let reld = rd_norm / (1.0 + c_norm);
        let gap = (pobj - dobj).abs().max(xz) / (1.0 + pobj.abs());
        let merit = r_p.norm() + rd_norm + xz;
        if merit_history.is_empty() {
            merit_history.push(merit);
        }
        log::debug!(
            "iter {iterations:3}: pobj {pobj:+.8e} dobj {dobj:+.8e} relp {relp:.2e} reld {reld:.2e} gap {gap:.2e}"
        );

        if relp <= opts.tol && reld <= opts.tol && gap <= opts.tol {
            status = Status::Optimal;
            break;
        }
        let score = relp.max(reld).max(gap);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, it.clone()));
        }
        if iterations >= 5 {
            if let Some(kind) = infeasibility(&cp, &it, dobj, pobj, opts.tol) {
                status = Status::Infeasible;
                certificate = Some(kind);
                break;
            }
        }
        if iterations >= opts.max_iters {
            break;
        }
        iterations += 1;

        // Newton system.
        let mu = xz / nu;
        let mut zinv = Vec::with_capacity(cp.sd.len());
        for z in &it.zs {
            match Cholesky::new(z.clone()) {
                Some(ch) => zinv.push(sym(&ch.inverse())),
                None => {
                    status = Status::NumericalFailure;
                    break;
                }
            }
        }
        if status == Status::NumericalFailure {
            break;
        }
        let mm = cp.schur(&it.x_lp, &it.z_lp, &it.xs, &zinv);
        let Some(fac) = Factor::new(&mm) else {
            status = Status::NumericalFailure;
            break;
        };

        let direction = |sigma_mu: f64, corr: Option<&Direction>| -> Direction {
            // R = sigma mu Z^-1 - X - X r_d Z^-1 - dXa dZa Z^-1 (per block)
            let r_sd: Vec<Matrix> = (0..cp.sd.len())
                .map(|s| {
                    let mut r = &zinv[s] * sigma_mu - &it.xs[s] - &it.xs[s] * &rd_sd[s] * &zinv[s];
                    if let Some(c) = corr {
                        r -= &c.dxs[s] * &c.dzs[s] * &zinv[s];
                    }
                    r
                })
                .collect();
            let r_lp = Vector::from_fn(n_lp, |j, _| {
                let (x, z) = (it.x_lp[j], it.z_lp[j]);
                let mut r = sigma_mu / z - x - x * rd_lp[j] / z;
                if let Some(c) = corr {
                    r -= c.dx_lp[j] * c.dz_lp[j] / z;
                }
                r
            });
            let rhs1 = &r_p - cp.apply(&r_lp, &r_sd);
            let mut dy = fac.solve_vec(&rhs1);
            // dX, dZ as functions of dy.
            let recover = |dy: &Vector| {
                let (aty_lp, aty_sd) = cp.adjoint(dy);
                let dz_lp = &rd_lp - &aty_lp;
                let dx_lp = Vector::from_fn(n_lp, |j, _| {
                    r_lp[j] + it.x_lp[j] * aty_lp[j] / it.z_lp[j]
                });
                let dzs: Vec<Matrix> =
                    (0..cp.sd.len()).map(|s| &rd_sd[s] - &aty_sd[s]).collect();
                let dxs: Vec<Matrix> = (0..cp.sd.len())
                    .map(|s| sym(&(&r_sd[s] + &it.xs[s] * &aty_sd[s] * &zinv[s])))
                    .collect();
                (dx_lp, dz_lp, dxs, dzs)
            };
            let (mut dx_lp, mut dz_lp, mut dxs, mut dzs) = recover(&dy);
            // Refine against the unreduced equations; forming rhs1 cancels
            // large terms once Z is nearly singular.
            for _ in 0..2 {
                let e1 = &r_p - cp.apply(&dx_lp, &dxs);
                let size = e1.norm();
                log::trace!("newton residual {size:.3e} (r_p {:.3e})", r_p.norm());
                if size <= 1e-15 * (1.0 + r_p.norm()) {
                    break;
                }
                dy += fac.solve_vec(&e1);
                (dx_lp, dz_lp, dxs, dzs) = recover(&dy);
            }
            Direction {
                dy,
                dx_lp,
                dz_lp,
                dxs,
                dzs,
            }
        };

        let steps = |d: &Direction| -> Option<(f64, f64)> {
            let mut ap = max_step_lp(&it.x_lp, &d.dx_lp);
            let mut ad = max_step_lp(&it.z_lp, &d.dz_lp);
            for s in 0..cp.sd.len() {
                ap = ap.min(max_step_sd(&it.xs[s], &d.dxs[s])?);
                ad = ad.min(max_step_sd(&it.zs[s], &d.dzs[s])?);
            }
            Some((ap, ad))
        };

        let pred = direction(0.0, None);
        let Some((ap, ad)) = steps(&pred) else {
            status = Status::NumericalFailure;
            break;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut xz_aff = 0.0;
        for j in 0..n_lp {
            xz_aff += (it.x_lp[j] + ap * pred.dx_lp[j]) * (it.z_lp[j] + ad * pred.dz_lp[j]);
        }
        for s in 0..cp.sd.len() {
            xz_aff += inner(
                &(&it.xs[s] + &pred.dxs[s] * ap),
                &(&it.zs[s] + &pred.dzs[s] * ad),
            );
        }
        let mu_aff = (xz_aff / nu).max(0.0);
        // Short predictor steps mean the iterate is poorly centred; a smaller
        // exponent then keeps more centring in the corrector.
        let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
        let sigma = (mu_aff / mu).powf(expon).clamp(0.0, 1.0);

        let dir = direction(sigma * mu, Some(&pred));
        let Some((ap, ad)) = steps(&dir) else {
            status = Status::NumericalFailure;
            break;
        };
        let gamma = opts.step_fraction.min(0.9 + 0.09 * last_step);
        let mut ap = (gamma * ap).min(1.0);
        let mut ad = (gamma * ad).min(1.0);

        // Backtrack until the merit function does not increase. Infeasible
        // problems may admit no such step; the full step is then taken so the
        // iterate can drift towards an infeasibility certificate.
        let prev = *merit_history.last().expect("seeded above");
        let candidate = |ap: f64, ad: f64| Iterate {
            y: &it.y + &dir.dy * ad,
            x_lp: &it.x_lp + &dir.dx_lp * ap,
            z_lp: &it.z_lp + &dir.dz_lp * ad,
            xs: (0..cp.sd.len()).map(|s| &it.xs[s] + &dir.dxs[s] * ap).collect(),
            zs: (0..cp.sd.len()).map(|s| &it.zs[s] + &dir.dzs[s] * ad).collect(),
        };
        let (ap0, ad0) = (ap, ad);
        let mut accepted = None;
        for _ in 0..30 {
            let cand = candidate(ap, ad);
            let m = merit_of(&cp, &cand);
            if m <= prev {
                accepted = Some((cand, m));
                break;
            }
            ap *= 0.7;
            ad *= 0.7;
        }
        let (next, m) = accepted.unwrap_or_else(|| {
            log::debug!("no merit decrease along the search direction; taking the full step");
            let cand = candidate(ap0, ad0);
            let m = merit_of(&cp, &cand);
            (cand, m)
        });
        log::trace!("step lengths: primal {ap:.3e} dual {ad:.3e} (max {ap0:.3e}, {ad0:.3e}) sigma {sigma:.2e}");
        last_step = ap.min(ad);
        it = next;
        // Both halves of a split free variable may grow without bound while
        // their difference settles. Shrinking them together leaves A(x) and
        // the objective unchanged.
        for &(a, b) in &splits {
            let common = 0.9 * it.x_lp[a].min(it.x_lp[b]);
            it.x_lp[a] -= common;
            it.x_lp[b] -= common;
        }
        merit_history.push(m);
    }

    if matches!(status, Status::MaxIters | Status::NumericalFailure) {
        if let Some((score, b)) = best {
            it = b;
            log::debug!("reporting the best iterate, worst relative residual {score:.2e}");
        }
    }

    // Map back to the user's block layout.
    let mut block_values = Vec::with_capacity(prob.psd_blocks.len());
    let mut dual_blocks = Vec::with_capacity(prob.psd_blocks.len());
    for map in &cp.block_map {
        match *map {
            Ok(j) => {
                block_values.push(Matrix::from_element(1, 1, it.x_lp[j]));
                dual_blocks.push(Matrix::from_element(1, 1, it.z_lp[j]));
            }
            Err(s) => {
                block_values.push(sym(&it.xs[s]));
                dual_blocks.push(sym(&it.zs[s]));
            }
        }
    }
    let mut free_values = vec![0.0; prob.free_vars];
    for (k, &j) in kept_free.iter().enumerate() {
        let (a, b) = splits[k];
        free_values[j] = it.x_lp[a] - it.x_lp[b];
    }
    if dropped_free && status == Status::Optimal {
        // A fixed variable with a nonzero reduced cost means the objective is
        // unbounded along its free direction.
        let reduced = &full_cf - full_af.transpose() * &it.y;
        let scale = 1.0 + full_cf.norm() + it.y.norm();
        if reduced.amax() > opts.tol.sqrt() * scale {
            status = Status::Infeasible;
            certificate = Some(CertificateKind::DualInfeasible);
        }
    }
    let mut sol = SdpSolution {
        status,
        free_values,
        block_values,
        dual_y: it.y.iter().cloned().collect(),
        dual_blocks,
        objective_value: 0.0,
        dual_objective: 0.0,
        kkt: KktResiduals {
            primal_res: f64::NAN,
            dual_res: f64::NAN,
            gap: f64::NAN,
        },
        iterations,
        merit_history,
        certificate,
    };
    sol.objective_value = prob.objective.eval(&sol.free_values, &sol.block_values);
    sol.dual_objective = cp.b.dot(&it.y);
    sol.kkt = kkt_report(prob, &sol);
    Ok(sol)
}

fn merit_of(cp: &Compiled, it: &Iterate) -> f64 {
    let r_p = &cp.b - cp.apply(&it.x_lp, &it.xs);
    let (aty_lp, aty_sd) = cp.adjoint(&it.y);
    let mut rd2 = (&cp.c_lp - aty_lp - &it.z_lp).norm_squared();
    let mut xz = it.x_lp.dot(&it.z_lp);
    for s in 0..cp.sd.len() {
        rd2 += (&cp.sd[s].c - &aty_sd[s] - &it.zs[s]).norm_squared();
        xz += inner(&it.xs[s], &it.zs[s]);
    }
    r_p.norm() + rd2.sqrt() + xz
}

/// Check the current iterate for an approximate certificate of infeasibility.
fn infeasibility(
    cp: &Compiled,
    it: &Iterate,
    dobj: f64,
    pobj: f64,
    tol: f64,
) -> Option<CertificateKind> {
    // Primal infeasibility: y / b^T y with -A^*(y) in the dual cone.
    if dobj > 0.0 {
        let y = &it.y / dobj;
        let scale = 1.0 + y.norm();
        let (aty_lp, aty_sd) = cp.adjoint(&y);
        let lp_ok = aty_lp.iter().all(|&v| v <= tol * scale);
        let sd_ok = aty_sd
            .iter()
            .all(|m| crate::linalg::min_sym_eigenvalue(&-m) >= -tol * scale);
        if lp_ok && sd_ok && y.norm() < 1.0 / tol {
            return Some(CertificateKind::PrimalInfeasible);
        }
    }
    // Dual infeasibility: a primal ray with negative objective.
    if pobj < 0.0 {
        let s = -pobj;
        let x_lp = &it.x_lp / s;
        let xs: Vec<Matrix> = it.xs.iter().map(|x| x / s).collect();
        let scale = 1.0 + x_lp.norm() + xs.iter().map(|m| m.norm()).sum::<f64>();
        let res = cp.apply(&x_lp, &xs).norm();
        if res <= tol * scale && scale < 1.0 / tol {
            return Some(CertificateKind::DualInfeasible);
        }
    }
    None
}

/// Problem `min Tr(W1) + Tr(W2)` s.t. `[[W1, M], [M^T, W2]]` PSD, whose optimum is
/// twice the nuclear norm of `M`.
pub fn nuclear_norm_problem(m: &Matrix) -> SdpProblem {
    let (r, c) = m.shape();
    let mut prob = SdpProblem::new();
    let blk = prob.add_block(r + c, "nuclear");
    let mut obj = LinearForm::new();
    for i in 0..r + c {
        obj.add_entry(blk, i, i, 1.0);
    }
    prob.objective = obj;
    for i in 0..r {
        for j in 0..c {
            prob.add_equality(LinearForm::new().with_entry(blk, i, r + j, 1.0), m[(i, j)]);
        }
    }
    prob
}
