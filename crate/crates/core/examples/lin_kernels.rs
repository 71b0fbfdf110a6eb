//! Rank, null space and pseudo-inverse of a rank-deficient matrix.

use privperturb::linalg::{null_space, pinv, rank_tol, singular_values, Matrix, Tolerance};

fn main() -> privperturb::Result<()> {
    // The third column is the sum of the first two.
    let m = Matrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 9.0, 7.0, 8.0, 15.0]);
    let tol = Tolerance::default();

    println!("singular values: {:.3e}", singular_values(&m)?.transpose());
    println!("rank: {}", rank_tol(&m, &tol)?);

    let kernel = null_space(&m, &tol)?;
    println!("kernel basis:{kernel:.6}");
    println!("|M N| = {:.2e}", (&m * &kernel).norm());

    let p = pinv(&m, &tol)?;
    println!("|M M+ M - M| = {:.2e}", (&m * &p * &m - &m).norm());
    Ok(())
}
