//! Controllability of the original and perturbed pairs.
//!
//! Feedback through `Kss` never changes controllability, but the input
//! scaling `I + Ksi` can destroy it. Two certificates are offered: an exact
//! left-eigenvector test on the perturbed pair, and a cheap convex sufficient
//! condition (`Ksi` symmetric with `(1 - eps) I + Ksi` positive semidefinite).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{
    block2x2, complex_rank, eigenvalues, rank_tol, realify, singular_values, svd, Matrix,
    Tolerance,
};
use crate::model::Perturbation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    KalmanRank,
    Pbh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityVerdict {
    pub controllable: bool,
    /// `det(C C^T)` of the Kalman matrix. Informational only: it under- or
    /// overflows quickly with the state dimension.
    pub gram_det: f64,
    pub rank: usize,
    pub method: Method,
}

/// `[B, AB, ..., A^{n-1} B]`.
pub fn controllability_matrix(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = Matrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        if k + 1 < n {
            block = a * &block;
        }
    }
    out
}

pub fn is_controllable(
    a: &Matrix,
    b: &Matrix,
    tol: &Tolerance,
    method: Method,
) -> Result<ControllabilityVerdict> {
    let n = a.nrows();
    let c = controllability_matrix(a, b);
    let gram_det = (&c * c.transpose()).determinant();
    let kalman_rank = rank_tol(&c, tol)?;
    let controllable = match method {
        Method::KalmanRank => kalman_rank == n,
        Method::Pbh => pbh(a, b, tol)?,
    };
    Ok(ControllabilityVerdict {
        controllable,
        gram_det,
        rank: kalman_rank,
        method,
    })
}

/// `rank [A - lambda I, B] = n` at every eigenvalue of `A`.
fn pbh(a: &Matrix, b: &Matrix, tol: &Tolerance) -> Result<bool> {
    let n = a.nrows();
    let zero_b = Matrix::zeros(n, b.ncols());
    for lam in eigenvalues(a)? {
        let re = crate::linalg::hstack(&[&(a - Matrix::identity(n, n) * lam.re), b]);
        let im = crate::linalg::hstack(&[&(Matrix::identity(n, n) * -lam.im), &zero_b]);
        if complex_rank(&re, &im, tol)? < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Convex sufficient condition for `I + Ksi` to be invertible.
///
/// Returns `(certified, min_eig)` where `min_eig` is the smallest eigenvalue
/// of the symmetric part of `(1 - eps) I + Ksi`.
pub fn corollary4_certificate(k_si: &Matrix, eps: f64, tol: &Tolerance) -> (bool, f64) {
    let p = k_si.nrows();
    let scale = 1.0 + k_si.amax();
    let asym = (k_si - k_si.transpose()).amax();
    let shifted = Matrix::identity(p, p) * (1.0 - eps) + k_si;
    let min_eig = crate::linalg::min_sym_eigenvalue(&shifted);
    let symmetric = asym <= tol.rank_tol * scale;
    (symmetric && min_eig >= -tol.rank_tol * scale, min_eig)
}

/// Left-eigenvector test on the perturbed pair `(A + B Kss, B (I + Ksi))`.
///
/// For every eigenvalue `lambda` the whole left eigenspace `V` of the
/// perturbed state matrix is formed, and the test requires `V^T B (I + Ksi)`
/// to have full row rank, so no left eigenvector is annihilated by the
/// perturbed input matrix. Complex eigenvalues are handled through the real
/// embedding of the complex eigenspace.
pub fn lemma3_check(
    a: &Matrix,
    b: &Matrix,
    k_ss: &Matrix,
    k_si: &Matrix,
    tol: &Tolerance,
) -> Result<bool> {
    let n = a.nrows();
    let p = b.ncols();
    let a_pert = a + b * k_ss;
    let b_pert = b * (Matrix::identity(p, p) + k_si);
    let at = a_pert.transpose();
    let scale = 1.0 + a_pert.amax();
    // Rank of the image is judged against the size of its factors; a nearly
    // singular I + Ksi must read as rank loss, not as a small full-rank matrix.
    let image_scale = crate::linalg::spectral_norm(b)?
        * (1.0 + crate::linalg::spectral_norm(k_si)?).max(1.0);
    for lam in eigenvalues(&a_pert)? {
        let real = lam.im.abs() <= 1e-12 * scale;
        let (m, block) = if real {
            (&at - Matrix::identity(n, n) * lam.re, 1)
        } else {
            let re = &at - Matrix::identity(n, n) * lam.re;
            let im = Matrix::identity(n, n) * -lam.im;
            (realify(&re, &im), 2)
        };
        let basis = eigenspace(&m, tol, block)?;
        let d = basis.ncols();
        let image = if real {
            b_pert.transpose() * &basis
        } else {
            let bt = b_pert.transpose();
            let zero = Matrix::zeros(p, n);
            block2x2(&bt, &zero, &zero, &bt) * &basis
        };
        let s = singular_values(&image)?;
        let kept = s.iter().filter(|&&v| v > tol.rank_tol * image_scale).count();
        if kept < d {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Null space of `m` that is never empty: an eigenvalue returned by the Schur
/// form makes `m` singular up to rounding, so at least `block` trailing right
/// singular vectors belong to the eigenspace. `block` is 2 for the real
/// embedding of a complex eigenspace, whose dimension is always even.
fn eigenspace(m: &Matrix, tol: &Tolerance, block: usize) -> Result<Matrix> {
    let c = m.ncols();
    let f = svd(m)?;
    let s1 = f.singular_values[0].max(f64::MIN_POSITIVE);
    // Eigenvalues carry rounding error, so use a looser cutoff than for plain rank.
    let cutoff = tol.rank_tol.max(1e-7) * s1;
    let mut k = f.singular_values.iter().filter(|&&s| s <= cutoff).count();
    k = k.max(block);
    if block == 2 && k % 2 == 1 {
        k += 1;
    }
    let k = k.min(c);
    Ok(f.v.columns(c - k, k).into_owned())
}

/// Mirror of a feasible perturbation: `(Kss, -Ksi - 2I, Kos, -Koi)`.
///
/// Its controllability matrix is the negative of the original one, and its
/// pencil differs from the original only by signs on block columns and rows,
/// so it keeps both the rank level and controllability.
pub fn mirror_perturbation(k: &Perturbation) -> Perturbation {
    let p = k.p();
    Perturbation {
        k_ss: k.k_ss.clone(),
        k_si: -&k.k_si - Matrix::identity(p, p) * 2.0,
        k_os: k.k_os.clone(),
        k_oi: -&k.k_oi,
    }
}

/// Midpoint of two perturbations, taken block-wise.
pub fn midpoint(a: &Perturbation, b: &Perturbation) -> Perturbation {
    Perturbation {
        k_ss: (&a.k_ss + &b.k_ss) * 0.5,
        k_si: (&a.k_si + &b.k_si) * 0.5,
        k_os: (&a.k_os + &b.k_os) * 0.5,
        k_oi: (&a.k_oi + &b.k_oi) * 0.5,
    }
}

/// Midpoint of `k` and [`mirror_perturbation`]`(k)` written out exactly:
/// `Kss` and `Kos` are kept, `Ksi = -I` and `Koi = 0`.
///
/// Averaging the two numerically leaves rounding noise of order one ulp in
/// `Ksi`, which is enough to make the controllability matrix nonzero.
pub fn mirror_midpoint(k: &Perturbation) -> Perturbation {
    let p = k.p();
    Perturbation {
        k_ss: k.k_ss.clone(),
        k_si: -Matrix::identity(p, p),
        k_os: k.k_os.clone(),
        k_oi: Matrix::zeros(k.l(), p),
    }
}

/// Kalman matrix of the pair perturbed by `k`.
pub fn perturbed_controllability_matrix(a: &Matrix, b: &Matrix, k: &Perturbation) -> Matrix {
    let p = b.ncols();
    let a_pert = a + b * &k.k_ss;
    let b_pert = b * (Matrix::identity(p, p) + &k.k_si);
    controllability_matrix(&a_pert, &b_pert)
}

/// Smallest singular value of the Kalman matrix relative to its largest.
pub fn controllability_margin(a: &Matrix, b: &Matrix) -> Result<f64> {
    let s = singular_values(&controllability_matrix(a, b))?;
    Ok(if s[0] > 0.0 { s[a.nrows() - 1] / s[0] } else { 0.0 })
}
