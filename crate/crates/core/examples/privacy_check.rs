//! Check the full-row-rank condition, then certify which initial states and
//! inputs the unperturbed system already hides, and replay the witness.

use privperturb::design_l2::z_star;
use privperturb::linalg::{Matrix, Tolerance, Vector};
use privperturb::model::LinearSystem;
use privperturb::privacy::{
    check_full_row_rank_everywhere, output_invariance_witness_test, protected_entries, TargetSpec,
};

fn main() -> privperturb::Result<()> {
    // Three inputs, one output: plenty of room for invisible directions.
    let sys = LinearSystem::new(
        Matrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.4]),
        Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, -0.5]),
        Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
        Matrix::from_row_slice(1, 3, &[0.0, 0.2, 0.1]),
    )?;
    let tol = Tolerance::default();

    let rank = check_full_row_rank_everywhere(&sys, &tol, 1)?;
    println!("full row rank everywhere: {} (zeros: {:?})", rank.holds, rank.invariant_zeros);

    let z = z_star(&sys.a);
    let targets = TargetSpec::all(sys.n(), sys.p());
    let report = protected_entries(&sys, &targets, z, &tol, 8, 1)?;
    println!("z = {z:.3}, kernel dimension {}", report.kernel_dim);
    for (i, ok) in &report.state_flags {
        println!("  x0[{}] certified: {ok}", i + 1);
    }
    for (j, ok) in &report.input_flags {
        println!("  u[{}] certified: {ok}", j + 1);
    }

    if let Some(v) = &report.witness_vector {
        let horizon = 20;
        let x0 = Vector::from_element(sys.n(), 1.0);
        let inputs: Vec<Vector> = (0..=horizon).map(|k| Vector::from_element(sys.p(), (k as f64).sin())).collect();
        let w = output_invariance_witness_test(&sys, z, v, 3.0, horizon, &x0, &inputs)?;
        println!("shifted trajectory differs in the outputs by {:.1e}", w.deviation);
    }
    Ok(())
}
