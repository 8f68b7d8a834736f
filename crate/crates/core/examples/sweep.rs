//! A resolution sweep through the run-directory driver, two workers.
//!
//!     cargo run --release --example sweep [OUT_DIR]

use kahler_lab::cli::{execute_sweep, sweep_table, RunConfig};

fn main() -> kahler_lab::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("kahler-lab-sweep"));
    let configs: Vec<RunConfig> = [512, 1024, 2048]
        .into_iter()
        .map(|n| {
            let mut c = RunConfig::default();
            c.grid.nodes = n;
            c.outputs.dir = Some(out.clone());
            c.outputs.plots = false;
            c
        })
        .collect();
    let rows = execute_sweep(&configs, 2)?;
    print!("{}", sweep_table(&rows));
    Ok(())
}
