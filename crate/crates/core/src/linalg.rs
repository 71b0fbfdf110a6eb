//! Dense real linear-algebra kernels: SVD, tolerance-based rank, null spaces,
//! pseudo-inverses and finite generalized eigenvalues of square pencils.
//!
//! Everything here is a pure function of its arguments. Matrices are
//! `nalgebra` dense matrices; complex arithmetic only shows up where
//! eigenvalues force it.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type C64 = Complex<f64>;

const MAX_SCHUR_ITERS: usize = 10_000;

/// Relative cutoff used to classify generalized eigenvalues as infinite.
pub const INFINITE_EIG_CUTOFF: f64 = 1e-12;

/// Numeric cutoffs for rank and zero decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Singular values at or below `rank_tol * sigma_1` count as zero.
    pub rank_tol: f64,
    /// Entry-level zero test (scaled by the caller where documented).
    pub zero_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rank_tol: 1e-8,
            zero_tol: 1e-9,
        }
    }
}

impl Tolerance {
    pub fn new(rank_tol: f64, zero_tol: f64) -> Result<Self> {
        let ok = |t: f64| t > 0.0 && t < 1.0;
        if !ok(rank_tol) || !ok(zero_tol) {
            return Err(Error::InvalidArgument(format!(
                "tolerances must lie in (0, 1), got rank_tol={rank_tol}, zero_tol={zero_tol}"
            )));
        }
        Ok(Self { rank_tol, zero_tol })
    }
}

/// Thin singular value decomposition `M = U diag(s) V^T` with `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Number of singular values above `rank_tol * sigma_1`.
    pub fn rank(&self, tol: &Tolerance) -> usize {
        count_above(&self.singular_values, tol.rank_tol)
    }
}

fn count_above(s: &Vector, rank_tol: f64) -> usize {
    let s1 = s.iter().cloned().fold(0.0, f64::max);
    if s1 <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rank_tol * s1).count()
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return Ok(Svd {
            u: Matrix::zeros(r, 0),
            singular_values: Vector::zeros(0),
            v: Matrix::zeros(c, 0),
        });
    }
    let fm = to_faer(m);
    let dec = fm.thin_svd().map_err(|_| Error::SvdNotConverged)?;
    // faer sorts singular values in nonincreasing order already.
    let (fu, fs, fv) = (dec.U(), dec.S().column_vector(), dec.V());
    Ok(Svd {
        u: Matrix::from_fn(r, k, |i, j| fu[(i, j)]),
        singular_values: Vector::from_fn(k, |i, _| fs[i]),
        v: Matrix::from_fn(c, k, |i, j| fv[(i, j)]),
    })
}

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn singular_values(m: &Matrix) -> Result<Vector> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vector::zeros(0));
    }
    let s = to_faer(m).singular_values().map_err(|_| Error::SvdNotConverged)?;
    let s = Vector::from_vec(s);
    Ok(s)
}

pub fn rank_tol(m: &Matrix, tol: &Tolerance) -> Result<usize> {
    Ok(count_above(&singular_values(m)?, tol.rank_tol))
}

/// Rank with the cutoff `rank_tol * max(sigma_1, scale)`.
///
/// A perturbed matrix whose entries all cancel to rounding level has rank
/// zero relative to the matrix it was derived from, but full rank relative to
/// itself. Passing the original norm as `scale` gives the former.
pub fn rank_at_scale(m: &Matrix, tol: &Tolerance, scale: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let s1 = s.iter().cloned().fold(scale.max(0.0), f64::max);
    if s1 <= 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > tol.rank_tol * s1).count())
}

/// Orthonormal basis of the right null space, one basis vector per column.
pub fn null_space(m: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    null_space_at_scale(m, tol, 0.0)
}

/// Null space with the cutoff `rank_tol * max(sigma_1, scale)`.
pub fn null_space_at_scale(m: &Matrix, tol: &Tolerance, scale: f64) -> Result<Matrix> {
    let (r, c) = m.shape();
    if c == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    // Zero-pad wide matrices so the thin SVD yields a complete V.
    let padded;
    let work = if r < c {
        padded = {
            let mut p = Matrix::zeros(c, c);
            p.view_mut((0, 0), (r, c)).copy_from(m);
            p
        };
        &padded
    } else {
        m
    };
    let f = svd(work)?;
    let s1 = f.singular_values.iter().cloned().fold(scale.max(0.0), f64::max);
    let rank = if s1 <= 0.0 {
        0
    } else {
        f.singular_values.iter().filter(|&&v| v > tol.rank_tol * s1).count()
    };
    Ok(f.v.columns(rank, c - rank).into_owned())
}

/// Moore-Penrose pseudo-inverse with singular values below `rank_tol * sigma_1` dropped.
pub fn pinv(m: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    let f = svd(m)?;
    let rank = f.rank(tol);
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for j in 0..rank {
        let s = f.singular_values[j];
        out += (f.v.column(j) * f.u.column(j).transpose()) / s;
    }
    Ok(out)
}

pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().cloned().fold(0.0, f64::max))
}

pub fn nuclear_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_values(m)?.sum())
}

/// Real embedding `[[re, -im], [im, re]]` of the complex matrix `re + i im`.
///
/// The embedding has exactly twice the rank of the complex matrix, and a
/// complex null vector `a + i b` maps to the real null vector `[a; b]`.
pub fn realify(re: &Matrix, im: &Matrix) -> Matrix {
    block2x2(re, &(-im), im, re)
}

/// Rank of the complex matrix `re + i im`, computed in real arithmetic.
pub fn complex_rank(re: &Matrix, im: &Matrix, tol: &Tolerance) -> Result<usize> {
    Ok(rank_tol(&realify(re, im), tol)? / 2)
}

/// Eigenvalues of a real square matrix through its real Schur form.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<C64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, MAX_SCHUR_ITERS).ok_or(
        Error::EigenNotConverged {
            iterations: MAX_SCHUR_ITERS,
        },
    )?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Finite eigenvalues `lambda` of the square pencil with `det(C + lambda E) = 0`.
///
/// Uses a QZ reduction; eigenvalue pairs `(alpha, beta)` with
/// `|beta| < 1e-12 * |(alpha, beta)|` are classified as infinite and dropped.
pub fn finite_generalized_eigenvalues(c: &Matrix, e: &Matrix) -> Result<Vec<C64>> {
    let n = c.nrows();
    if c.ncols() != n || e.nrows() != n || e.ncols() != n {
        return Err(Error::Dimension(format!(
            "pencil matrices must be square and equal-sized, got {:?} and {:?}",
            c.shape(),
            e.shape()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let fc = faer::Mat::<f64>::from_fn(n, n, |i, j| c[(i, j)]);
    // det(C - mu (-E)) = det(C + mu E)
    let fe = faer::Mat::<f64>::from_fn(n, n, |i, j| -e[(i, j)]);
    let gev = fc
        .generalized_eigen(&fe)
        .map_err(|_| Error::QzNotConverged { size: n })?;
    let alphas = gev.S_a();
    let betas = gev.S_b();
    let mut out = Vec::new();
    for k in 0..n {
        let a = alphas[k];
        let b = betas[k];
        let a = Complex::new(a.re, a.im);
        let b = Complex::new(b.re, b.im);
        let scale = (a.norm_sqr() + b.norm_sqr()).sqrt();
        if scale == 0.0 || b.norm() < INFINITE_EIG_CUTOFF * scale {
            continue;
        }
        out.push(a / b);
    }
    Ok(out)
}

/// Assemble a 2x2 block matrix `[[a, b], [c, d]]`.
pub fn block2x2(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix) -> Matrix {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    debug_assert_eq!(b.shape(), (r1, c2));
    debug_assert_eq!(c.shape(), (r2, c1));
    let mut out = Matrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

pub fn hstack(parts: &[&Matrix]) -> Matrix {
    let rows = parts.first().map_or(0, |m| m.nrows());
    let cols: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        out.view_mut((0, at), (rows, m.ncols())).copy_from(*m);
        at += m.ncols();
    }
    out
}

pub fn vstack(parts: &[&Matrix]) -> Matrix {
    let cols = parts.first().map_or(0, |m| m.ncols());
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for m in parts {
        out.view_mut((at, 0), (m.nrows(), cols)).copy_from(*m);
        at += m.nrows();
    }
    out
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let f = svd(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(f.singular_values.as_slice(), &[1.0, 1.0, 1.0]);

        let d = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]);
        let f = svd(&d).unwrap();
        assert_eq!(f.singular_values.as_slice(), &[3.0, 0.0]);
        assert!((f.u[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert!((f.v[(0, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn svd_reconstructs_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(&mut rng, 4, 3);
        let f = svd(&m).unwrap();
        let err = (f.reconstruct() - &m).norm();
        assert!(err <= 1e-10 * (1.0 + m.norm()), "residual {err}");
        let utu = f.u.transpose() * &f.u;
        assert!((utu - Matrix::identity(3, 3)).norm() < 1e-12);
        assert!(f.singular_values[0] >= f.singular_values[1]);
    }

    #[test]
    fn rank_cases() {
        let tol = Tolerance::default();
        assert_eq!(rank_tol(&Matrix::zeros(3, 4), &tol).unwrap(), 0);
        assert_eq!(rank_tol(&Matrix::identity(5, 5), &tol).unwrap(), 5);
        let u = Vector::from_vec(vec![1.0, 2.0, -1.0]);
        let v = Vector::from_vec(vec![0.5, 3.0]);
        let outer = &u * v.transpose();
        let s = singular_values(&outer).unwrap();
        assert!(s[1] / s[0] < tol.rank_tol);
        assert_eq!(rank_tol(&outer, &tol).unwrap(), 1);
    }

    #[test]
    fn null_space_cases() {
        let tol = Tolerance::default();
        let n = null_space(&Matrix::from_row_slice(1, 2, &[1.0, 1.0]), &tol).unwrap();
        assert_eq!(n.ncols(), 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((n[(0, 0)].abs() - h).abs() < 1e-14);
        assert!((n[(0, 0)] + n[(1, 0)]).abs() < 1e-14);

        assert_eq!(null_space(&Matrix::identity(4, 4), &tol).unwrap().ncols(), 0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random(&mut rng, 4, 2) * random(&mut rng, 2, 4);
        let basis = null_space(&m, &tol).unwrap();
        assert_eq!(basis.ncols(), 2);
        let s1 = singular_values(&m).unwrap()[0];
        for j in 0..basis.ncols() {
            let res = (&m * basis.column(j)).norm();
            assert!(res <= 10.0 * tol.rank_tol * s1 * basis.column(j).norm());
        }
    }

    #[test]
    fn pinv_cases() {
        let tol = Tolerance::default();
        assert_eq!(
            pinv(&Matrix::identity(3, 3), &tol).unwrap(),
            Matrix::identity(3, 3)
        );
        let d = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = pinv(&d, &tol).unwrap();
        assert!((p - Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0])).norm() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random(&mut rng, 2, 3);
        let mp = pinv(&m, &tol).unwrap();
        assert!((&m * &mp - Matrix::identity(2, 2)).norm() < 1e-10);
    }

    #[test]
    fn generalized_eigenvalues_cases() {
        let c = -Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0]));
        let e = Matrix::identity(2, 2);
        let mut ev: Vec<f64> = finite_generalized_eigenvalues(&c, &e)
            .unwrap()
            .iter()
            .map(|z| {
                assert!(z.im.abs() < 1e-12);
                z.re
            })
            .collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);

        let ev = finite_generalized_eigenvalues(&c, &Matrix::zeros(2, 2)).unwrap();
        assert!(ev.is_empty());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random(&mut rng, 3, 3);
        let e = random(&mut rng, 3, 3);
        let ev = finite_generalized_eigenvalues(&c, &e).unwrap();
        assert_eq!(ev.len(), 3);
        for lam in ev {
            // C + lam E must be singular: smallest singular value of its real embedding vanishes.
            let re = &c + &e * lam.re;
            let im = &e * lam.im;
            let s = singular_values(&realify(&re, &im)).unwrap();
            let smin = s[s.len() - 1];
            assert!(smin < 1e-10 * (1.0 + s[0]), "sigma_min {smin} at {lam}");
        }
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerance::new(0.0, 1e-9).is_err());
        assert!(Tolerance::new(1e-8, 1.0).is_err());
        assert!(Tolerance::new(1e-8, 1e-9).is_ok());
    }
}
