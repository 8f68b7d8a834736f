//! Changing `(η, f, u)` to `(η - ddᶜh, f + h, u + a(t)h)` leaves the metric
//! unchanged; three random bounded `h` drawn from a fixed seed.
//!
//!     cargo run --release --example gauge

use kahler_lab::ansatz::{RhoGrid, ScenarioSpec};
use kahler_lab::flow::{gauge_comparison, random_gauge, FlowConfig};
use kahler_lab::picard::{DivisorClass, SurfaceKind};
use rand::SeedableRng;

fn main() -> kahler_lab::Result<()> {
    let spec = ScenarioSpec::new(
        SurfaceKind::Hirzebruch(1),
        DivisorClass::from_ints(&[4, -1]),
        RhoGrid::new(15.0, 1024)?,
    );
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..3 {
        let h = random_gauge(&mut rng);
        let rep = gauge_comparison(&spec, &h, &FlowConfig::default(), 0.5)?;
        println!(
            "h = {}",
            serde_json::to_string(&h.terms).unwrap_or_default()
        );
        println!(
            "  sup|ΔU'| {:.2e}  sup|ΔU''| {:.2e}  sup|u_h - u - a h| {:.2e}",
            rep.metric_defect.0, rep.metric_defect.1, rep.potential_defect
        );
    }
    Ok(())
}
