//! Nuclear norm of a matrix computed two ways: from its singular values and
//! as the optimum of a semidefinite program.

use privperturb::linalg::{nuclear_norm, Matrix};
use privperturb::sdp::{kkt_report, nuclear_norm_problem, solve, SolverOptions};

fn main() -> privperturb::Result<()> {
    let m = Matrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64).cos());
    let exact = nuclear_norm(&m)?;
    let prob = nuclear_norm_problem(&m);
    let sol = solve(&prob, &SolverOptions::default())?;
    let kkt = kkt_report(&prob, &sol);
    println!("from singular values: {exact:.9}");
    // The trace objective counts each singular value twice.
    println!("from the SDP:         {:.9} ({:?}, {} iterations)", sol.objective_value / 2.0, sol.status, sol.iterations);
    println!("KKT residuals: primal {:.1e}, dual {:.1e}, gap {:.1e}", kkt.primal_res, kkt.dual_res, kkt.gap);
    Ok(())
}
