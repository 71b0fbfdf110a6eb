//! Regenerate the HVAC system files under `crates/core/fixtures`.
//!
//! ```text
//! cargo run --release --example make_fixtures [-- <output dir>]
//! ```

use std::path::PathBuf;

use privperturb::hvac::{l0_fixture, l2_fixture, ZoneParams};
use privperturb::io::save_system;

fn main() -> privperturb::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    let params = ZoneParams::path(10);

    let (sys, rel) = l2_fixture(&params, 2024)?;
    save_system(&dir.join("hvac_l2.json"), &sys, &rel)?;
    println!("hvac_l2.json: n = {}, p = {}, q = {}", sys.n(), sys.p(), sys.q());

    let (sys, rel) = l0_fixture(&params, 2024)?;
    save_system(&dir.join("hvac_l0.json"), &sys, &rel)?;
    println!("hvac_l0.json: n = {}, p = {}, q = {}", sys.n(), sys.p(), sys.q());
    Ok(())
}
