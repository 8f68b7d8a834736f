#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use kahler_lab::ansatz::{RhoGrid, Scenario, ScenarioSpec};
use kahler_lab::flow::{run_flow, FlowConfig, RunLedger};
use kahler_lab::picard::{DivisorClass, SurfaceKind};

pub const DIVISORIAL: [i64; 2] = [4, -1];
pub const FIBER: [i64; 2] = [2, -1];

pub fn hirzebruch(ample: &[i64], n: usize) -> ScenarioSpec {
    ScenarioSpec::new(
        SurfaceKind::Hirzebruch(1),
        DivisorClass::from_ints(ample),
        RhoGrid::new(15.0, n).unwrap(),
    )
}

pub fn torus(n: usize) -> ScenarioSpec {
    ScenarioSpec::new(
        SurfaceKind::Torus(2),
        DivisorClass::from_ints(&[1]),
        RhoGrid::new(8.0, n).unwrap(),
    )
}

type Cache = Mutex<HashMap<(Vec<i64>, usize), Arc<(Scenario, RunLedger)>>>;

/// Full run until the singularity, computed once per test binary.
pub fn full_run(ample: &[i64], n: usize) -> Arc<(Scenario, RunLedger)> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (ample.to_vec(), n);
    if let Some(hit) = cache.lock().unwrap().get(&key) {
        return hit.clone();
    }
    let scenario = hirzebruch(ample, n).build().unwrap();
    let (ledger, _) = run_flow(&scenario, &FlowConfig::until_singular(&scenario)).unwrap();
    let entry = Arc::new((scenario, ledger));
    cache.lock().unwrap().entry(key).or_insert(entry).clone()
}

pub fn sup_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(f64::abs).fold(0.0, f64::max)
}
