//! The blow-up of the plane with `A = 4H - E`: the flow contracts the
//! exceptional curve at `T = log 2`.
//!
//!     cargo run --release --example divisorial_flow [N]

use kahler_lab::ansatz::{RhoGrid, ScenarioSpec};
use kahler_lab::flow::{run_flow, FlowConfig};
use kahler_lab::picard::{class_path, DivisorClass, SurfaceKind};

fn main() -> kahler_lab::Result<()> {
    let n = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2048);
    let spec = ScenarioSpec::new(
        SurfaceKind::Hirzebruch(1),
        DivisorClass::from_ints(&[4, -1]),
        RhoGrid::new(15.0, n)?,
    );
    let scenario = spec.build()?;
    let started = std::time::Instant::now();
    let (ledger, _) = run_flow(&scenario, &FlowConfig::until_singular(&scenario))?;
    println!(
        "N = {n}, {} steps in {:.2?}",
        ledger.steps.len(),
        started.elapsed()
    );
    println!("termination  {:?}", ledger.termination.reason);
    println!("T theory     {:.9}", ledger.termination.t_theory);
    println!("T numeric    {:.9}", ledger.t_numeric().unwrap_or(f64::NAN));

    println!(
        "\n{:>8} {:>12} {:>12} {:>12} {:>12}",
        "t", "<g,E>", "<g,F>", "A(t)·E", "A(t)·F"
    );
    let surface = scenario.surface();
    for s in ledger.steps.iter().step_by(ledger.steps.len() / 12 + 1) {
        let (e, f) = s.pairings.unwrap_or((f64::NAN, f64::NAN));
        let a = class_path(&spec.ample, surface, s.t)?;
        let pair = |label: &str| {
            let c = surface.curve(label).expect("basis curve").class.to_real();
            kahler_lab::picard::intersect_real(&a.coeffs, &c.coeffs, surface)
        };
        println!(
            "{:>8.4} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            s.t,
            e,
            f,
            pair("E"),
            pair("F")
        );
    }
    Ok(())
}
