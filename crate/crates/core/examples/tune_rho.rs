//! Lower the rank target until every target entry is hidden.

use privperturb::design_l2::{tune_rho, write_tune_csv};
use privperturb::hvac::{l2_fixture, ZoneParams};
use privperturb::linalg::Tolerance;
use privperturb::privacy::TargetSpec;

fn main() -> privperturb::Result<()> {
    let (sys, rel) = l2_fixture(&ZoneParams::path(6), 5)?;
    let targets = TargetSpec::new((0..sys.n()).collect(), sys.exogenous_indices());
    let outcome = tune_rho(&sys, &rel, &targets, &Tolerance::default())?;
    write_tune_csv(&outcome.history, std::io::stdout())?;
    println!("stopped at rho = {} ({:?})", outcome.rho_final, outcome.stop);
    Ok(())
}
