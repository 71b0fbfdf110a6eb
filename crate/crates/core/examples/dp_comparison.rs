//! Compare the designed perturbation with a Gaussian-noise release on the
//! same closed loop and occupancy draws.

use privperturb::design_l2::tune_rho;
use privperturb::hvac::{closed_loop_sim, dp_baseline, l2_fixture, DpParams, Scenario, ZoneParams};
use privperturb::linalg::Tolerance;
use privperturb::privacy::TargetSpec;

fn main() -> privperturb::Result<()> {
    let (sys, rel) = l2_fixture(&ZoneParams::path(10), 2024)?;
    let targets = TargetSpec::new((0..sys.n()).collect(), sys.exogenous_indices());
    let k = tune_rho(&sys, &rel, &targets, &Tolerance::default())?.result.k;
    let scenario = Scenario::default();
    let window = scenario.horizon / 4;
    let iop = closed_loop_sim(&sys, &rel, &k, &scenario)?;
    println!("designed perturbation: steady-state disutility {:.3}", iop.steady_state_disutility(window));
    for epsilon in [0.1, 1.0, 10.0] {
        let dp = DpParams { epsilon, ..DpParams::default() };
        let noisy = dp_baseline(&sys, &rel, &dp, &scenario)?;
        println!(
            "gaussian noise, epsilon {epsilon:>4}: sigma {:.2}, steady-state disutility {:.3}",
            dp.sigma()?,
            noisy.steady_state_disutility(window)
        );
    }
    Ok(())
}
