//! Brute-force reference computations used as ground truth in tests.
//!
//! Nothing here is meant to scale. The sparsest-null-vector search enumerates
//! column subsets and refuses matrices with more than [`MAX_NVP_COLUMNS`]
//! columns rather than approximating.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    null_space_at_scale, rank_at_scale, spectral_norm, vstack, Matrix, Tolerance, Vector,
};
use crate::model::{pencil, LinearSystem};

/// Largest column count accepted by [`sparsest_null_vector`].
pub const MAX_NVP_COLUMNS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NvpResult {
    pub v_star: Vector,
    pub sparsity: usize,
    /// Column subsets tested, counting every subset of smaller size plus
    /// the subsets of the winning size up to and including the winner.
    pub subsets_examined: u64,
    /// Zero-based columns carrying the support of `v_star`.
    pub support: Vec<usize>,
}

/// Binomial coefficient as `u64`; exact for the sizes used here.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Position of a sorted subset among all subsets of the same size of
/// `0..n`, in lexicographic order.
pub fn lex_rank(subset: &[usize], n: usize) -> u64 {
    let k = subset.len();
    let mut rank = 0u64;
    let mut prev = 0usize;
    for (i, &s) in subset.iter().enumerate() {
        for skipped in prev..s {
            rank += binomial(n - skipped - 1, k - i - 1);
        }
        prev = s + 1;
    }
    rank
}

/// Advance `idx` to the next size-`k` subset of `0..n` in lexicographic
/// order. Returns false after the last one.
fn next_subset(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// A nonzero `v` with `M v = 0` and the fewest possible nonzero entries.
///
/// Subsets are tried by increasing size and, within a size, in lexicographic
/// order. A subset has a nontrivial kernel when the submatrix has a
/// singular value below `rank_tol * ||M||_2`.
pub fn sparsest_null_vector(m: &Matrix, tol: &Tolerance) -> Result<NvpResult> {
    let c = m.ncols();
    if c == 0 {
        return Err(Error::InvalidArgument("matrix has no columns".into()));
    }
    if c > MAX_NVP_COLUMNS {
        return Err(Error::SizeLimit(format!(
            "exhaustive null-vector search is limited to {MAX_NVP_COLUMNS} columns, got {c}"
        )));
    }
    let scale = spectral_norm(m)?;
    let mut examined = 0u64;
    for k in 1..=c {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            examined += 1;
            let sub = m.select_columns(&idx);
            if rank_at_scale(&sub, tol, scale)? < k {
                // By minimality the kernel of the submatrix is one-dimensional.
                let v_sub = null_space_at_scale(&sub, tol, scale)?.column(0).into_owned();
                let mut v_star = Vector::zeros(c);
                for (pos, &j) in idx.iter().enumerate() {
                    v_star[j] = v_sub[pos];
                }
                return Ok(NvpResult {
                    v_star,
                    sparsity: k,
                    subsets_examined: examined,
                    support: idx,
                });
            }
            if !next_subset(&mut idx, c) {
                break;
            }
        }
    }
    Err(Error::Precondition(
        "the matrix has a trivial kernel, so no null vector exists".into(),
    ))
}

/// Diagonal matrix with `-1` wherever `v_star` is nonzero.
///
/// An entry counts as nonzero when it exceeds `zero_tol * max |v_i|`.
pub fn procedure_one(v_star: &Vector, tol: &Tolerance) -> Result<Matrix> {
    let peak = v_star.amax();
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument("v_star must be nonzero".into()));
    }
    let c = v_star.len();
    Ok(Matrix::from_fn(c, c, |i, j| {
        if i == j && v_star[i].abs() > tol.zero_tol * peak {
            -1.0
        } else {
            0.0
        }
    }))
}

/// Number of entries larger than `zero_tol` in magnitude.
fn count_nonzeros(m: &Matrix, tol: &Tolerance) -> usize {
    m.iter().filter(|v| v.abs() > tol.zero_tol).count()
}

/// Outcome of [`claim1_check`], with the pieces that were compared.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim1Outcome {
    pub holds: bool,
    pub nvp_sparsity: usize,
    pub k_nonzeros: usize,
    pub stacked_rank: usize,
}

/// Build the diagonal perturbation from the sparsest null vector of `M` and
/// confirm that `[M; I + K]` loses column rank at a cost equal to the
/// null-vector sparsity.
pub fn claim1_check(m: &Matrix, tol: &Tolerance) -> Result<Claim1Outcome> {
    let nvp = sparsest_null_vector(m, tol)?;
    let k = procedure_one(&nvp.v_star, tol)?;
    let c = m.ncols();
    let stacked = vstack(&[m, &(Matrix::identity(c, c) + &k)]);
    let scale = spectral_norm(&stacked)?;
    let stacked_rank = rank_at_scale(&stacked, tol, scale)?;
    let k_nonzeros = count_nonzeros(&k, tol);
    Ok(Claim1Outcome {
        holds: stacked_rank < c && k_nonzeros == nvp.sparsity,
        nvp_sparsity: nvp.sparsity,
        k_nonzeros,
        stacked_rank,
    })
}

/// Grid point in `[z_lo, z_hi]` minimising `||D(z)||_F^2`. Ties go to the
/// smallest `z`.
pub fn grid_min_frobenius(sys: &LinearSystem, z_lo: f64, z_hi: f64, step: f64) -> Result<f64> {
    if !(z_lo < z_hi) || !(step > 0.0) || !z_lo.is_finite() || !z_hi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "need z_lo < z_hi and step > 0, got [{z_lo}, {z_hi}] step {step}"
        )));
    }
    let count = ((z_hi - z_lo) / step).floor() as usize;
    let mut best = (f64::INFINITY, z_lo);
    for i in 0..=count {
        let z = z_lo + i as f64 * step;
        let f = pencil(sys, z).norm_squared();
        if f < best.0 {
            best = (f, z);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn zero_column_is_its_own_null_vector() {
        let m = Matrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let r = sparsest_null_vector(&m, &tol()).unwrap();
        assert_eq!(r.sparsity, 1);
        assert_eq!(r.support, vec![2]);
        assert!((r.v_star[2].abs() - 1.0).abs() < 1e-12);
        assert_eq!(r.subsets_examined, 3);
    }

    #[test]
    fn two_columns_force_the_difference() {
        let m = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let r = sparsest_null_vector(&m, &tol()).unwrap();
        assert_eq!(r.sparsity, 2);
        assert!((r.v_star[0] + r.v_star[1]).abs() < 1e-12);
        assert!(r.v_star[0].abs() > 0.5);
    }

    #[test]
    fn generic_wide_matrix_needs_rows_plus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Matrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        let r = sparsest_null_vector(&m, &tol()).unwrap();
        assert_eq!(r.sparsity, 4);
        assert!((&m * &r.v_star).norm() < 1e-10);
        // Every subset of size three was tried before the winner.
        let smaller: u64 = (1..4).map(|k| binomial(6, k)).sum();
        assert_eq!(r.subsets_examined, smaller + lex_rank(&r.support, 6) + 1);
    }

    #[test]
    fn too_many_columns_is_refused() {
        let m = Matrix::zeros(1, 17);
        assert!(matches!(sparsest_null_vector(&m, &tol()), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn lex_rank_enumerates_in_order() {
        let mut idx = vec![0, 1, 2];
        let mut expected = 0;
        loop {
            assert_eq!(lex_rank(&idx, 6), expected);
            expected += 1;
            if !next_subset(&mut idx, 6) {
                break;
            }
        }
        assert_eq!(expected, binomial(6, 3));
    }

    #[test]
    fn procedure_one_marks_the_support() {
        let v = Vector::from_vec(vec![1.0, 0.0, 1.0]);
        let k = procedure_one(&v, &tol()).unwrap();
        assert_eq!(k, Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 0.0, -1.0])));
        assert!((&k * &v + &v).norm() == 0.0);
        assert!(procedure_one(&Vector::zeros(3), &tol()).is_err());
    }

    #[test]
    fn claim_one_on_small_cases() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0]);
        let out = claim1_check(&m, &tol()).unwrap();
        assert!(out.holds);
        assert_eq!(out.nvp_sparsity, 1);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Matrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let out = claim1_check(&m, &tol()).unwrap();
        assert!(out.holds, "{out:?}");
        assert_eq!(out.nvp_sparsity, 3);
    }

    #[test]
    fn grid_search_examples() {
        let sys = LinearSystem::new(
            Matrix::identity(10, 10),
            Matrix::zeros(10, 1),
            Matrix::zeros(1, 10),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        let z = grid_min_frobenius(&sys, -3.0, 3.0, 1e-3).unwrap();
        assert!((z - 1.0).abs() <= 1e-3);

        let sys = LinearSystem::new(
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 1),
        )
        .unwrap();
        let z = grid_min_frobenius(&sys, -1.0, 1.0, 1e-3).unwrap();
        assert!(z.abs() <= 1e-3);
        assert!(grid_min_frobenius(&sys, 1.0, -1.0, 0.1).is_err());
    }
}
