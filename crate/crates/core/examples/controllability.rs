//! Controllability of a perturbed system: the margin certificate, the
//! rank test, and a perturbation pair whose midpoint breaks control.

use privperturb::controllability::{
    corollary4_certificate, is_controllable, lemma3_check, mirror_midpoint, perturbed_controllability_matrix, Method,
};
use privperturb::linalg::{rank_tol, Matrix, Tolerance};
use privperturb::model::Perturbation;

fn main() -> privperturb::Result<()> {
    let a = Matrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, 0.0, 0.8, 0.1, 0.0, 0.0, 0.7]);
    let b = Matrix::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
    let tol = Tolerance::default();
    println!("plant: {:?}", is_controllable(&a, &b, &tol, Method::KalmanRank)?);

    let mut k = Perturbation::zeros(3, 2, 1);
    k.k_ss = Matrix::from_row_slice(2, 3, &[0.1, 0.0, -0.2, 0.0, 0.3, 0.0]);
    k.k_si = Matrix::from_row_slice(2, 2, &[-0.3, 0.1, 0.1, -0.2]);
    let (holds, min_eig) = corollary4_certificate(&k.k_si, 0.1, &tol);
    println!("margin certificate with eps = 0.1: {holds} (smallest eigenvalue {min_eig:.3})");
    println!("perturbed pair controllable: {}", lemma3_check(&a, &b, &k.k_ss, &k.k_si, &tol)?);

    // Halfway between K and its mirror, the inputs are cancelled outright.
    let mid = mirror_midpoint(&k);
    let c = perturbed_controllability_matrix(&a, &b, &mid);
    println!("midpoint controllability rank: {} of 3", rank_tol(&c, &tol)?);
    Ok(())
}
