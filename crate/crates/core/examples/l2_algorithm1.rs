//! The closed-form minimum-norm design: pick a rank target, build `K`, and
//! check the rank drop and the output-norm bound.

use privperturb::design_l2::{algorithm1, feasibility_floor, upper_bound};
use privperturb::hvac::{l2_fixture, ZoneParams};
use privperturb::linalg::Tolerance;
use privperturb::privacy::TargetSpec;

fn main() -> privperturb::Result<()> {
    let (sys, rel) = l2_fixture(&ZoneParams::path(4), 3)?;
    let tol = Tolerance::default();
    let exo = sys.exogenous_part();
    let floor = feasibility_floor(&exo, &rel, &tol)?;
    let targets = TargetSpec::new((0..sys.n()).collect(), sys.exogenous_indices());
    println!("rank targets from {floor} to {} are reachable", exo.n() + exo.q());

    for rho in (floor..=exo.n() + exo.q()).rev().step_by(2) {
        let d = algorithm1(&sys, &rel, &targets, rho, &tol)?;
        println!(
            "rho {rho:>2}: pencil rank {:>2}, |K| = {:.3}, output gain {:.3} <= {:.3}, protected {}/{}",
            d.pencil_rank,
            d.k.assemble().norm(),
            d.objective.l2,
            upper_bound(&exo, &rel, d.z, &tol)?,
            d.protection.certified_count(),
            targets.len(),
        );
    }
    Ok(())
}
