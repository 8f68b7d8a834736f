//! `A = 2H - E` on the blow-up of the plane: the fibers of the ruling shrink
//! to points at `T = log(3/2)` and the metric degenerates everywhere.
//!
//!     cargo run --release --example fiber_collapse

use kahler_lab::ansatz::{RhoGrid, ScenarioSpec};
use kahler_lab::flow::{run_flow, FlowConfig, FlowOperator};
use kahler_lab::picard::{DivisorClass, SurfaceKind};
use kahler_lab::singularity::{fiber_collapse, locate_s0};

fn main() -> kahler_lab::Result<()> {
    let scenario = ScenarioSpec::new(
        SurfaceKind::Hirzebruch(1),
        DivisorClass::from_ints(&[2, -1]),
        RhoGrid::new(15.0, 2048)?,
    )
    .build()?;
    let (ledger, _) = run_flow(&scenario, &FlowConfig::until_singular(&scenario))?;
    let op = FlowOperator::new(&scenario);
    println!(
        "T theory {:.6}, T numeric {:.6}",
        ledger.termination.t_theory, ledger.terminal.t
    );
    println!("{:>8} {:>12}", "t", "max U''");
    for snap in &ledger.snapshots {
        let m = op.metric(&snap.u, snap.t);
        println!(
            "{:>8.4} {:>12.4e}",
            snap.t,
            m.q.iter().copied().fold(0.0, f64::max)
        );
    }
    let fc = fiber_collapse(&op, &ledger);
    let s0 = locate_s0(&op, &ledger.terminal, None);
    println!(
        "terminal/initial max U'' = {:.3e} (collapse: {})",
        fc.ratio, fc.pass
    );
    println!(
        "degenerate locus: {:?} over {} nodes",
        s0.locus,
        s0.nodes.len()
    );
    Ok(())
}
