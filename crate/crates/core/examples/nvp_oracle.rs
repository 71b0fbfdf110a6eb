//! Exhaustive sparsest null vector, and the diagonal perturbation built
//! from it that removes column rank at the same cost.

use privperturb::linalg::{Matrix, Tolerance};
use privperturb::oracles::{claim1_check, sparsest_null_vector};

fn main() -> privperturb::Result<()> {
    // Columns 1 and 4 are parallel, so a 2-sparse kernel vector exists.
    let m = Matrix::from_row_slice(3, 5, &[
        1.0, 0.0, 2.0, 2.0, 1.0,
        0.5, 1.0, 0.0, 1.0, 3.0,
        -1.0, 2.0, 1.0, -2.0, 0.0,
    ]);
    let tol = Tolerance::default();
    let nvp = sparsest_null_vector(&m, &tol)?;
    println!("sparsity {} on columns {:?} after {} subsets", nvp.sparsity, nvp.support, nvp.subsets_examined);
    println!("v = {:.4}", nvp.v_star.transpose());
    let claim = claim1_check(&m, &tol)?;
    println!(
        "diagonal perturbation with {} nonzeros leaves the stack at rank {} (rank drop confirmed: {})",
        claim.k_nonzeros, claim.stacked_rank, claim.holds
    );
    Ok(())
}
