//! Sparse perturbation design on a small building, swept over the weight
//! of the nuclear-norm term.

use privperturb::design_l0::{sweep_c, write_sweep_csv};
use privperturb::hvac::{l0_fixture, ZoneParams};
use privperturb::privacy::TargetSpec;

fn main() -> privperturb::Result<()> {
    let (sys, rel) = l0_fixture(&ZoneParams::path(3), 7)?;
    let targets = TargetSpec::new((0..sys.n()).collect(), (0..sys.n()).collect());
    let rows = sweep_c(&sys, &rel, &targets, &[0.5, 1.0, 2.0, 3.0], 0.1, 7)?;
    write_sweep_csv(&rows, std::io::stdout())?;
    Ok(())
}
