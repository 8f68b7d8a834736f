//! Sub/super-solution sandwich and the a-priori bound monitors on the three
//! model flows.
//!
//!     cargo run --release --example certify

use kahler_lab::ansatz::{RhoGrid, ScenarioSpec};
use kahler_lab::certificates::{certify, Check};
use kahler_lab::flow::{run_flow, FlowConfig};
use kahler_lab::picard::{DivisorClass, SurfaceKind};

fn main() -> kahler_lab::Result<()> {
    let cases = [
        (
            "torus",
            SurfaceKind::Torus(2),
            vec![1],
            RhoGrid::new(8.0, 64)?,
        ),
        (
            "divisorial",
            SurfaceKind::Hirzebruch(1),
            vec![4, -1],
            RhoGrid::new(15.0, 1024)?,
        ),
        (
            "fiber",
            SurfaceKind::Hirzebruch(1),
            vec![2, -1],
            RhoGrid::new(15.0, 1024)?,
        ),
    ];
    for (name, surface, ample, grid) in cases {
        let scenario = ScenarioSpec::new(surface, DivisorClass::from_ints(&ample), grid).build()?;
        let (ledger, _) = run_flow(&scenario, &FlowConfig::until_singular(&scenario))?;
        let report = certify(&ledger, &Check::DEFAULT, None)?;
        println!(
            "== {name} ({})",
            if report.all_pass() {
                "all pass"
            } else {
                "FAILURES"
            }
        );
        print!("{}", report.summary_table());
    }
    Ok(())
}
