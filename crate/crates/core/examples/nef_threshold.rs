//! Nef thresholds, singular times and contraction types for the catalog,
//! computed in exact rational arithmetic.
//!
//!     cargo run --example nef_threshold

use kahler_lab::picard::{classify_contraction, format_rational, DivisorClass, SurfaceModel};

fn main() -> kahler_lab::Result<()> {
    let catalog = [
        (SurfaceModel::hirzebruch(1), vec![4, -1]),
        (SurfaceModel::hirzebruch(1), vec![2, -1]),
        (SurfaceModel::hirzebruch(2), vec![3, -1]),
        (SurfaceModel::p2(), vec![1]),
        (SurfaceModel::torus(), vec![1]),
    ];
    println!(
        "{:<4} {:<10} {:>6} {:>10}  {:<15} ray",
        "M", "A", "r", "T", "contraction"
    );
    for (surface, ample) in catalog {
        let a = DivisorClass::from_ints(&ample);
        let info = classify_contraction(&a, &surface)?;
        println!(
            "{:<4} {:<10} {:>6} {:>10.6}  {:<15} {}",
            surface.name(),
            a.to_string(),
            info.nef_threshold
                .as_ref()
                .map_or("inf".into(), format_rational),
            info.singular_time,
            info.kind.to_string(),
            info.contracted_label.as_deref().unwrap_or("-"),
        );
    }
    Ok(())
}
