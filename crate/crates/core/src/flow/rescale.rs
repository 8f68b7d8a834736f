//! Comparison of a run with the run started from a multiple of `g₀`.

use serde::{Deserialize, Serialize};

use super::{FlowConfig, FlowOperator, Integrator, RunLedger};
use crate::ansatz::ScenarioSpec;
use crate::error::{LabError, Result};
use crate::picard::{rational_to_f64, Rational};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleSample {
    pub s: f64,
    pub t: f64,
    pub k: f64,
    /// `sup_ρ |k(s)·g(t(s)) - g̃(s)|` over both metric coefficients.
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleReport {
    #[serde(with = "crate::picard::rational_str")]
    pub factor: Rational,
    pub samples: Vec<RescaleSample>,
    pub defect: f64,
    pub t_numeric: Option<f64>,
    pub t_numeric_rescaled: Option<f64>,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub t_theory: f64,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub t_theory_rescaled: f64,
}

/// `k(s) = (K - 1)e^{-s} + 1`.
pub fn k_of(factor: f64, s: f64) -> f64 {
    (factor - 1.0) * (-s).exp() + 1.0
}

/// `t(s) = log((e^s + K - 1)/K)`.
pub fn t_of(factor: f64, s: f64) -> f64 {
    ((s.exp() + factor - 1.0) / factor).ln()
}

/// Runs the flow from `g₀` and from `K·g₀` and compares `k(s)·g(t(s))` with
/// `g̃(s)` at `samples + 1` equally spaced `s ∈ [0, 0.9·T̃]`.
pub fn rescaled_run(
    factor: Rational,
    spec: &ScenarioSpec,
    cfg: &FlowConfig,
    samples: usize,
) -> Result<RescaleReport> {
    if factor <= Rational::from_integer(0) {
        return Err(LabError::Precondition(
            "rescale factor must be positive".into(),
        ));
    }
    let kf = rational_to_f64(&factor);
    let base = spec.build()?;
    let scaled_spec = ScenarioSpec {
        ample: spec.ample.scale(factor),
        ..spec.clone()
    };
    let scaled = scaled_spec.build()?;
    let t_scaled = scaled.singular_time();
    let s_max = if t_scaled.is_finite() {
        0.9 * t_scaled
    } else {
        cfg.t_end
    };
    let ss: Vec<f64> = (0..=samples)
        .map(|i| s_max * i as f64 / samples.max(1) as f64)
        .collect();
    let ts: Vec<f64> = ss.iter().map(|&s| t_of(kf, s)).collect();

    let with_times = |times: &[f64], t_sing: f64| FlowConfig {
        snapshot_times: times.to_vec(),
        t_end: if t_sing.is_finite() {
            t_sing + 0.5
        } else {
            cfg.t_end
        },
        ..cfg.clone()
    };
    let cfg_base = with_times(&ts, base.singular_time());
    let cfg_scaled = with_times(&ss, t_scaled);
    let (a, b) = rayon::join(
        || Integrator::new(&base, cfg_base).and_then(|i| i.run()),
        || Integrator::new(&scaled, cfg_scaled).and_then(|i| i.run()),
    );
    let (la, _) = a?;
    let (lb, _) = b?;
    let op_a = FlowOperator::new(&base);
    let op_b = FlowOperator::new(&scaled);

    let mut out = Vec::with_capacity(ss.len());
    for (&s, &t) in ss.iter().zip(&ts) {
        let (Some(ga), Some(gb)) = (metric_at(&la, &op_a, t), metric_at(&lb, &op_b, s)) else {
            continue;
        };
        let k = k_of(kf, s);
        let defect =
            ga.p.iter()
                .zip(&gb.p)
                .chain(ga.q.iter().zip(&gb.q))
                .map(|(x, y)| (k * x - y).abs())
                .fold(0.0, f64::max);
        out.push(RescaleSample { s, t, k, defect });
    }
    let defect = out.iter().map(|x| x.defect).fold(0.0, f64::max);
    Ok(RescaleReport {
        factor,
        samples: out,
        defect,
        t_numeric: la.t_numeric(),
        t_numeric_rescaled: lb.t_numeric(),
        t_theory: base.singular_time(),
        t_theory_rescaled: t_scaled,
    })
}

fn metric_at(l: &RunLedger, op: &FlowOperator, t: f64) -> Option<super::MetricValues> {
    let snap = l.snapshot_near(t).filter(|s| (s.t - t).abs() < 1e-9)?;
    Some(op.metric(&snap.u, snap.t))
}
