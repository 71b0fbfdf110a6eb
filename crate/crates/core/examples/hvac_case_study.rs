//! Design a perturbation for a ten-zone building and regulate the
//! perturbed plant, reporting how far released outputs stray from the truth.

use privperturb::design_l2::tune_rho;
use privperturb::hvac::{closed_loop_sim, l2_fixture, Scenario, ZoneParams};
use privperturb::linalg::Tolerance;
use privperturb::privacy::TargetSpec;

fn main() -> privperturb::Result<()> {
    let (sys, rel) = l2_fixture(&ZoneParams::path(10), 2024)?;
    let targets = TargetSpec::new((0..sys.n()).collect(), sys.exogenous_indices());
    let tuned = tune_rho(&sys, &rel, &targets, &Tolerance::default())?;
    println!("rho = {}, every target hidden: {}", tuned.rho_final, tuned.result.protection.all_protected);

    let scenario = Scenario::default();
    let report = closed_loop_sim(&sys, &rel, &tuned.result.k, &scenario)?;
    for k in (0..=scenario.horizon).step_by(20) {
        println!(
            "k {k:>3}: mean temperature {:.2}, relative disutility {:.4}",
            report.temperatures[k].mean(),
            report.relative_series[k]
        );
    }
    println!("largest relative disutility after k = 10: {:.4}", report.max_relative_from(10));
    Ok(())
}
