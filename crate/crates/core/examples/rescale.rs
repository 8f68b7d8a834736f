//! Starting from `K·g₀` is the same flow reparametrized: `g̃(s) = k(s)·g(t(s))`
//! with `k(s) = (K - 1)e^{-s} + 1` and `t(s) = log((e^s + K - 1)/K)`.
//!
//!     cargo run --release --example rescale

use kahler_lab::ansatz::{RhoGrid, ScenarioSpec};
use kahler_lab::flow::{rescaled_run, FlowConfig};
use kahler_lab::picard::{DivisorClass, Rational, SurfaceKind};

fn main() -> kahler_lab::Result<()> {
    let spec = ScenarioSpec::new(
        SurfaceKind::Hirzebruch(1),
        DivisorClass::from_ints(&[4, -1]),
        RhoGrid::new(15.0, 1024)?,
    );
    let rep = rescaled_run(Rational::from_integer(2), &spec, &FlowConfig::default(), 12)?;
    println!("{:>8} {:>8} {:>8} {:>10}", "s", "t(s)", "k(s)", "defect");
    for x in &rep.samples {
        println!("{:>8.4} {:>8.4} {:>8.4} {:>10.2e}", x.s, x.t, x.k, x.defect);
    }
    println!("sup defect {:.3e}", rep.defect);
    println!(
        "T numeric {:.6} (theory {:.6}); rescaled {:.6} (theory {:.6})",
        rep.t_numeric.unwrap_or(f64::NAN),
        rep.t_theory,
        rep.t_numeric_rescaled.unwrap_or(f64::NAN),
        rep.t_theory_rescaled
    );
    Ok(())
}
