//! Gauge freedom of the scalar reduction: shifting `η` by `-ddᶜh` and `f` by
//! `h` changes the potential by `a(t)h` and leaves the metric alone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gauge_change, run_flow, FlowConfig, FlowOperator};
use crate::ansatz::{GaugeSpec, GaugeTerm, Profile, ScenarioSpec};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeReport {
    pub t: f64,
    pub gauge: GaugeSpec,
    /// `sup |U'_h - U'|` and `sup |U''_h - U''|`.
    pub metric_defect: (f64, f64),
    /// `sup |u_h - (u + a(t)h)|`.
    pub potential_defect: f64,
}

impl GaugeReport {
    pub fn metric_sup(&self) -> f64 {
        self.metric_defect.0.max(self.metric_defect.1)
    }
}

/// A random gauge of one to three bounded terms.
pub fn random_gauge<R: Rng>(rng: &mut R) -> GaugeSpec {
    let n = rng.gen_range(1..=3);
    let terms = (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                GaugeTerm::SoftplusStep {
                    amp: rng.gen_range(-0.3..0.3),
                    shift: rng.gen_range(0.5..4.0),
                }
            } else {
                GaugeTerm::Logistic {
                    amp: rng.gen_range(-0.3..0.3),
                    center: rng.gen_range(-3.0..3.0),
                }
            }
        })
        .collect();
    GaugeSpec { terms }
}

/// Runs the plain and the gauged scenario to `t` and compares the metrics.
pub fn gauge_comparison(
    spec: &ScenarioSpec,
    gauge: &GaugeSpec,
    cfg: &FlowConfig,
    t: f64,
) -> Result<GaugeReport> {
    let plain = ScenarioSpec {
        gauge: None,
        ..spec.clone()
    }
    .build()?;
    let gauged = plain.spec().clone().with_gauge(gauge.clone()).build()?;
    if !(t > 0.0 && t < plain.singular_time()) {
        return Err(LabError::Precondition(format!(
            "comparison time {t} must lie in (0, T)"
        )));
    }
    let cfg = FlowConfig {
        t_end: t,
        snapshot_every: None,
        snapshot_times: vec![t],
        ..cfg.clone()
    };
    let (a, b) = rayon::join(|| run_flow(&plain, &cfg), || run_flow(&gauged, &cfg));
    let ((la, _), (lb, _)) = (a?, b?);
    let pick = |l: &super::RunLedger| {
        l.snapshot_near(t)
            .filter(|s| (s.t - t).abs() < 1e-12)
            .cloned()
            .ok_or_else(|| LabError::Precondition(format!("run stopped before t = {t}")))
    };
    let (sa, sb) = (pick(&la)?, pick(&lb)?);
    let (oa, ob) = (FlowOperator::new(&plain), FlowOperator::new(&gauged));
    let (ma, mb) = (oa.metric(&sa.u, t), ob.metric(&sb.u, t));
    let sup = |x: &[f64], y: &[f64]| {
        x.iter()
            .zip(y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let grid = plain.grid();
    let shifted = gauge_change(&Profile::new(grid, sa.u.clone()), &gauge.profile(grid), t);
    Ok(GaugeReport {
        t,
        gauge: gauge.clone(),
        metric_defect: (sup(&ma.p, &mb.p), sup(&ma.q, &mb.q)),
        potential_defect: sup(&shifted.values, &sb.u),
    })
}
