//! The flat torus: `K` is trivial, the flow exists for all time and the
//! potential is `u(t) = n(1 - t - e^{-t})`.
//!
//!     cargo run --release --example torus_flow

use kahler_lab::ansatz::{RhoGrid, ScenarioSpec};
use kahler_lab::flow::{run_flow, FlowConfig};
use kahler_lab::picard::{DivisorClass, SurfaceKind};

fn main() -> kahler_lab::Result<()> {
    let scenario = ScenarioSpec::new(
        SurfaceKind::Torus(2),
        DivisorClass::from_ints(&[1]),
        RhoGrid::new(8.0, 64)?,
    )
    .build()?;
    let cfg = FlowConfig {
        t_end: 1.0,
        dt_init: 1e-4,
        snapshot_every: Some(0.25),
        ..FlowConfig::default()
    };
    let (ledger, _) = run_flow(&scenario, &cfg)?;
    println!(
        "{:>6} {:>14} {:>14} {:>10}",
        "t", "u (numeric)", "n(1-t-e^-t)", "error"
    );
    for snap in &ledger.snapshots {
        let exact = 2.0 * (1.0 - snap.t - (-snap.t).exp());
        let err = snap.u.iter().map(|u| (u - exact).abs()).fold(0.0, f64::max);
        println!(
            "{:>6.3} {:>14.10} {:>14.10} {:>10.2e}",
            snap.t, snap.u[0], exact, err
        );
    }
    Ok(())
}
