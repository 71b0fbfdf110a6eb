//! Build the system pencil, perturb the system, and confirm that the
//! perturbation enters the pencil through `F K`.

use privperturb::linalg::{rank_tol, Matrix, Tolerance};
use privperturb::model::{apply_perturbation, f_matrix, pencil, LinearSystem, Perturbation, ReleaseMap};

fn main() -> privperturb::Result<()> {
    let sys = LinearSystem::new(
        Matrix::from_row_slice(2, 2, &[0.6, 0.2, 0.0, 0.5]),
        Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 1.0]),
        Matrix::from_row_slice(1, 2, &[1.0, -1.0]),
        Matrix::from_row_slice(1, 2, &[0.0, 0.5]),
    )?;
    let rel = ReleaseMap::identity(sys.q());
    let z = 0.7;
    let tol = Tolerance::default();

    let d = pencil(&sys, z);
    println!("pencil at z = {z}:{d:.3}");
    println!("rank {} of {} rows", rank_tol(&d, &tol)?, d.nrows());

    let (n, p, l) = (sys.n(), sys.p(), rel.l());
    let k = Perturbation::from_assembled(
        &Matrix::from_fn(p + l, n + p, |i, j| 0.05 * (i as f64 + 1.0) - 0.02 * j as f64),
        n,
        p,
        l,
    )?;
    let perturbed = apply_perturbation(&sys, &rel, &k)?;
    let gap = (pencil(&perturbed, z) - (d + f_matrix(&sys, &rel) * k.assemble())).amax();
    println!("perturbed A:{:.4}", perturbed.a);
    println!("max |D_hat - (D + F K)| = {gap:.1e}");
    Ok(())
}
