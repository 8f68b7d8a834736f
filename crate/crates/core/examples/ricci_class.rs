//! The Ricci form of any metric on `F_k` represents `-K`; checked on random
//! smooth profiles.
//!
//!     cargo run --release --example ricci_class

use kahler_lab::ansatz::{class_of, ricci_form, MetricProfile, RhoGrid};
use kahler_lab::picard::SurfaceModel;
use rand::SeedableRng;

fn main() -> kahler_lab::Result<()> {
    let grid = RhoGrid::new(15.0, 2048)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for k in 1..=3 {
        let surface = SurfaceModel::hirzebruch(k);
        let minus_k: Vec<f64> = surface
            .canonical_class
            .to_real()
            .coeffs
            .iter()
            .map(|c| -c)
            .collect();
        for _ in 0..3 {
            let g = MetricProfile::random(grid, k, &mut rng);
            let metric_class = class_of(&g.form(), &surface)?;
            let ric = class_of(&ricci_form(&g)?, &surface)?;
            println!(
                "F{k}: [g] = ({:+.4}, {:+.4})  [Ric] = ({:+.6}, {:+.6})  -K = ({:+.4}, {:+.4})",
                metric_class.coeffs[0],
                metric_class.coeffs[1],
                ric.coeffs[0],
                ric.coeffs[1],
                minus_k[0],
                minus_k[1]
            );
        }
    }
    Ok(())
}
