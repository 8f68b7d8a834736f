//! Terminal analysis of the divisorial run: where the determinant vanishes,
//! its decay rate toward the exceptional curve, and boundedness away from it.
//!
//!     cargo run --release --example decay_fit [N]

use kahler_lab::ansatz::{RhoGrid, ScenarioSpec};
use kahler_lab::flow::{run_flow, FlowConfig};
use kahler_lab::picard::{DivisorClass, SurfaceKind};
use kahler_lab::singularity::{analyze, DEFAULT_FIT_WINDOW};

fn main() -> kahler_lab::Result<()> {
    let n = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2048);
    let scenario = ScenarioSpec::new(
        SurfaceKind::Hirzebruch(1),
        DivisorClass::from_ints(&[4, -1]),
        RhoGrid::new(15.0, n)?,
    )
    .build()?;
    let (ledger, _) = run_flow(&scenario, &FlowConfig::until_singular(&scenario))?;
    let report = analyze(&ledger, DEFAULT_FIT_WINDOW, 0.0)?;
    print!("{}", report.summary());
    if let Ok(p) = &report.pushforward {
        println!(
            "\n{:>8} {:>10} {:>10} {:>10} {:>10}",
            "t", "det min", "det max", "|D1 u|", "|D2 u|"
        );
        for s in &p.samples {
            println!(
                "{:>8.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                s.t, s.det_min, s.det_max, s.d1_sup, s.d2_sup
            );
        }
    }
    Ok(())
}
