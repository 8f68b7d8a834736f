//! Terminal-time analysis: where the metric degenerates, how fast the
//! determinant decays toward the contracted divisor, and whether the metric
//! stays controlled away from it.

use serde::{Deserialize, Serialize};

use crate::ansatz::Scenario;
use crate::error::{LabError, Result};
use crate::flow::{probe_times, FlowOperator, MetricValues, RunLedger, Snapshot};
use crate::picard::{class_path, rational_to_f64, ContractionKind};

/// Absolute threshold on `det(g/g₀)` marking a node as degenerate: 10⁻³ times
/// the median of the reference ratio, which is identically 1.
pub const DEFAULT_S0_THRESHOLD: f64 = 1e-3;
/// Default decay-fit window on the symmetry axis.
pub const DEFAULT_FIT_WINDOW: (f64, f64) = (-12.0, -6.0);
/// Allowed distance of the fitted slope from the predicted exponent.
pub const SLOPE_TOL: f64 = 0.2;
/// Allowed RMS residual of the decay fit.
pub const FIT_RESIDUAL_TOL: f64 = 0.05;
/// Fiber collapse: terminal `max U''` relative to the initial one.
pub const FIBER_COLLAPSE_RATIO: f64 = 0.05;
/// Largest terminal pairing with the contracted curve.
pub const CONTRACTED_PAIRING_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locus {
    Empty,
    NearLowerEnd,
    NearUpperEnd,
    Interior,
    Everywhere,
    Scattered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S0Report {
    pub t: f64,
    pub threshold: f64,
    pub nodes: Vec<usize>,
    pub locus: Locus,
    /// `min(U'/U₀', U''/U₀'')` is below `sqrt(threshold)` at every flagged node,
    /// so each one also fails the metric-equivalence margin.
    pub inside_singular_set: bool,
}

/// `det(g/g₀)` at a stored snapshot.
pub fn det_profile(op: &FlowOperator, snap: &Snapshot) -> Vec<f64> {
    op.det_ratio(&op.metric(&snap.u, snap.t))
}

/// Nodes where `det(g/g₀) < threshold`, classified by position.
pub fn locate_s0(op: &FlowOperator, snap: &Snapshot, threshold: Option<f64>) -> S0Report {
    let threshold = threshold.unwrap_or(DEFAULT_S0_THRESHOLD);
    let m = op.metric(&snap.u, snap.t);
    let det = op.det_ratio(&m);
    let r0 = op.initial_reference();
    let nodes: Vec<usize> = (0..det.len()).filter(|&j| !(det[j] >= threshold)).collect();
    let grid = op.grid();
    let third = grid.half_width / 3.0;
    let all = |f: &dyn Fn(f64) -> bool| nodes.iter().all(|&j| f(grid.node(j)));
    let locus = if nodes.is_empty() {
        Locus::Empty
    } else if nodes.len() == det.len() {
        Locus::Everywhere
    } else if all(&|r| r <= -third) {
        Locus::NearLowerEnd
    } else if all(&|r| r >= third) {
        Locus::NearUpperEnd
    } else if all(&|r| r.abs() < third) {
        Locus::Interior
    } else {
        Locus::Scattered
    };
    let floor = threshold.sqrt();
    let inside_singular_set = nodes
        .iter()
        .all(|&j| (m.p[j] / r0.p[j]).min(m.q[j] / r0.q[j]) < floor);
    S0Report {
        t: snap.t,
        threshold,
        nodes,
        locus,
        inside_singular_set,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t: f64,
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the least-squares line.
    pub residual: f64,
    pub predicted_exponent: f64,
    pub nodes_used: usize,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// Least-squares slope of `log det(g/g₀)` against `ρ` on `window`.
pub fn fit_decay(
    scenario: &Scenario,
    op: &FlowOperator,
    snap: &Snapshot,
    window: (f64, f64),
) -> Result<DecayFit> {
    let info = scenario.info();
    if info.kind != ContractionKind::Divisorial {
        return Err(LabError::Precondition(format!(
            "decay fit needs a divisorial contraction, got {}",
            info.kind
        )));
    }
    let grid = op.grid();
    let (a, b) = window;
    if !(a < b && a >= -grid.half_width && b <= -grid.half_width / 3.0) {
        return Err(LabError::Precondition(format!(
            "window [{a}, {b}] must lie in [{}, {}]",
            -grid.half_width,
            -grid.half_width / 3.0
        )));
    }
    let predicted: f64 = info
        .discrepancies
        .iter()
        .map(|e| rational_to_f64(&e.discrepancy))
        .sum();
    let det = det_profile(op, snap);
    let mut idx: Vec<usize> = (0..grid.nodes)
        .filter(|&j| {
            let r = grid.node(j);
            r >= a && r <= b
        })
        .collect();
    let mut warnings = Vec::new();
    // Shrink from the degenerate end while nodes are unusable.
    let bad = |j: usize| !(det[j] > 0.0 && det[j].ln().is_finite());
    let before = idx.len();
    while idx.first().is_some_and(|&j| bad(j)) {
        idx.remove(0);
    }
    idx.retain(|&j| !bad(j));
    if idx.len() < before {
        let lo = idx.first().map_or(b, |&j| grid.node(j));
        warnings.push(format!(
            "dropped {} degenerate nodes; window shrunk to [{lo:.3}, {b}]",
            before - idx.len()
        ));
    }
    if idx.len() < 3 {
        return Err(LabError::Precondition(
            "decay window has fewer than 3 usable nodes".into(),
        ));
    }
    let xs: Vec<f64> = idx.iter().map(|&j| grid.node(j)).collect();
    let ys: Vec<f64> = idx.iter().map(|&j| det[j].ln()).collect();
    let (slope, intercept, residual) = least_squares(&xs, &ys);
    let pass = (slope - predicted).abs() <= SLOPE_TOL && residual <= FIT_RESIDUAL_TOL;
    let window = (xs[0], xs[xs.len() - 1]);
    Ok(DecayFit {
        t: snap.t,
        window,
        slope,
        intercept,
        residual,
        predicted_exponent: predicted,
        nodes_used: xs.len(),
        warnings,
        pass,
    })
}

/// `(slope, intercept, rms residual)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub t: f64,
    /// Extremes of `det(g(t)/g₀(t))` over all nodes.
    pub det_min: f64,
    pub det_max: f64,
    /// `sup |Δ_ρ u|` and `sup |Δ²_ρ u|` on `ρ ≥ ρ_cut`.
    pub d1_sup: f64,
    pub d2_sup: f64,
    /// `sup (Δ_{g₀(t)}u + log det(g₀(t)/g₀))`.
    pub laplacian_comparison: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushforwardProbe {
    pub rho_cut: f64,
    pub samples: Vec<ProbeSample>,
    pub b0: f64,
    pub b1: f64,
    pub pass: bool,
}

impl PushforwardProbe {
    /// Largest relative change of `B₀`, `B₁` and the difference quotients
    /// against a probe of the same scenario on another grid.
    pub fn drift(&self, other: &PushforwardProbe) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        let mut d = rel(self.b0, other.b0).max(rel(self.b1, other.b1));
        for (x, y) in self.samples.iter().zip(&other.samples) {
            d = d.max(rel(x.d1_sup, y.d1_sup)).max(rel(x.d2_sup, y.d2_sup));
        }
        d
    }
}

/// Samples `det(g(t)/g₀(t))` and downstream difference quotients at the probe
/// times approaching the singular time.
pub fn probe_pushforward(
    scenario: &Scenario,
    ledger: &RunLedger,
    rho_cut: f64,
) -> Result<PushforwardProbe> {
    if scenario.kind() != ContractionKind::Divisorial {
        return Err(LabError::Precondition(format!(
            "pushforward probe needs a divisorial contraction, got {}",
            scenario.kind()
        )));
    }
    ledger.check_scenario(scenario)?;
    let op = FlowOperator::new(scenario);
    let grid = op.grid();
    let h = grid.spacing();
    let mut samples = Vec::new();
    for t in probe_times(scenario.singular_time()) {
        let Some(snap) = ledger.snapshot_near(t).filter(|s| (s.t - t).abs() < 1e-9) else {
            continue;
        };
        let m = op.metric(&snap.u, snap.t);
        let rt = op.reference(snap.t);
        let det = op.det_ratio(&m);
        let det_ref = op.det_ratio(&rt);
        let ratio: Vec<f64> = det.iter().zip(&det_ref).map(|(a, b)| a / b).collect();
        let u = &snap.u;
        let mut d1_sup: f64 = 0.0;
        let mut d2_sup: f64 = 0.0;
        let mut lap: f64 = f64::NEG_INFINITY;
        for j in 1..grid.nodes - 1 {
            let d1 = (u[j + 1] - u[j - 1]) / (2.0 * h);
            let d2 = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (h * h);
            if grid.node(j) >= rho_cut {
                d1_sup = d1_sup.max(d1.abs());
                d2_sup = d2_sup.max(d2.abs());
            }
            lap = lap.max(d1 / rt.p[j] + d2 / rt.q[j] + det_ref[j].ln());
        }
        samples.push(ProbeSample {
            t: snap.t,
            det_min: ratio.iter().copied().fold(f64::INFINITY, f64::min),
            det_max: ratio.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            d1_sup,
            d2_sup,
            laplacian_comparison: lap,
        });
    }
    if samples.is_empty() {
        return Err(LabError::Precondition(
            "ledger holds no snapshots at the probe times".into(),
        ));
    }
    let b0 = samples
        .iter()
        .map(|s| s.det_min)
        .fold(f64::INFINITY, f64::min);
    let b1 = samples
        .iter()
        .map(|s| s.det_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = b0 > 0.0
        && b1.is_finite()
        && samples.iter().all(|s| {
            s.d1_sup.is_finite() && s.d2_sup.is_finite() && s.laplacian_comparison.is_finite()
        });
    Ok(PushforwardProbe {
        rho_cut,
        samples,
        b0,
        b1,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberCollapse {
    pub t: f64,
    pub max_q_initial: f64,
    pub max_q_terminal: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// Terminal `max U''` against the initial one.
pub fn fiber_collapse(op: &FlowOperator, ledger: &RunLedger) -> FiberCollapse {
    let q0 = op.initial_reference().q.iter().copied().fold(0.0, f64::max);
    let m: MetricValues = op.metric(&ledger.terminal.u, ledger.terminal.t);
    let q1 = m.q.iter().copied().fold(0.0, f64::max);
    FiberCollapse {
        t: ledger.terminal.t,
        max_q_initial: q0,
        max_q_terminal: q1,
        ratio: q1 / q0,
        pass: q1 <= FIBER_COLLAPSE_RATIO * q0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractedPairing {
    pub curve: String,
    /// Pairings over the last recorded steps, oldest first.
    pub tail: Vec<f64>,
    pub terminal: f64,
    pub monotone: bool,
    /// Terminal pairing with the other basis curve, and its class-path value.
    pub other_curve: String,
    pub other_terminal: f64,
    pub other_expected: f64,
    pub pass: bool,
}

/// `⟨g(t), C⟩ → 0` for the contracted curve, and the other pairing tracks the
/// class path.
pub fn contracted_pairing(scenario: &Scenario, ledger: &RunLedger) -> Result<ContractedPairing> {
    let Some(c) = scenario.as_calabi() else {
        return Err(LabError::Precondition(
            "pairings need a Hirzebruch scenario".into(),
        ));
    };
    let label = c
        .info
        .contracted_label
        .clone()
        .ok_or_else(|| LabError::Precondition("no contracted curve".into()))?;
    let pick = |p: (f64, f64), l: &str| if l == "E" { p.0 } else { p.1 };
    let other = if label == "E" { "F" } else { "E" };
    let tail: Vec<f64> = ledger
        .steps
        .iter()
        .rev()
        .take(10)
        .rev()
        .filter_map(|s| s.pairings.map(|p| pick(p, &label)))
        .collect();
    let monotone = tail.windows(2).all(|w| w[1] <= w[0]);
    let last = ledger
        .steps
        .last()
        .and_then(|s| s.pairings)
        .ok_or_else(|| LabError::Precondition("ledger has no pairings".into()))?;
    let terminal = pick(last, &label);
    let t_end = ledger.terminal.t;
    let at = class_path(&c.spec.ample, &c.surface, t_end)?;
    let curve = c.surface.curve(other).expect("Hirzebruch basis");
    let other_expected =
        crate::picard::intersect_real(&at.coeffs, &curve.class.to_real().coeffs, &c.surface);
    let other_terminal = pick(last, other);
    let pass = terminal.abs() <= CONTRACTED_PAIRING_TOL
        && monotone
        && (other_terminal - other_expected).abs() <= CONTRACTED_PAIRING_TOL;
    Ok(ContractedPairing {
        curve: label,
        tail,
        terminal,
        monotone,
        other_curve: other.to_string(),
        other_terminal,
        other_expected,
        pass,
    })
}

/// Everything [`analyze`] computes for one run; rejected probes carry the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub scenario_hash: String,
    pub kind: ContractionKind,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub t_theory: f64,
    pub t_numeric: Option<f64>,
    pub s0: S0Report,
    pub decay: std::result::Result<DecayFit, String>,
    pub pushforward: std::result::Result<PushforwardProbe, String>,
    pub fiber: Option<FiberCollapse>,
    pub contracted: std::result::Result<ContractedPairing, String>,
}

impl SingularityReport {
    /// The checks that apply to the contraction kind all pass.
    pub fn pass(&self) -> bool {
        match self.kind {
            ContractionKind::Divisorial => {
                self.s0.locus == Locus::NearLowerEnd
                    && self.decay.as_ref().is_ok_and(|d| d.pass)
                    && self.pushforward.as_ref().is_ok_and(|p| p.pass)
                    && self.contracted.as_ref().is_ok_and(|c| c.pass)
            }
            ContractionKind::FiberType => {
                self.s0.locus == Locus::Everywhere
                    && self.fiber.as_ref().is_some_and(|f| f.pass)
                    && self.contracted.as_ref().is_ok_and(|c| c.pass)
            }
            _ => self.s0.locus == Locus::Empty,
        }
    }

    pub fn summary(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "contraction       {}", self.kind);
        let _ = writeln!(
            s,
            "T theory/numeric  {:.6} / {}",
            self.t_theory,
            self.t_numeric.map_or("-".into(), |t| format!("{t:.6}"))
        );
        let _ = writeln!(
            s,
            "S0 locus          {:?} ({} nodes)",
            self.s0.locus,
            self.s0.nodes.len()
        );
        match &self.decay {
            Ok(d) => {
                let _ = writeln!(
                    s,
                    "decay slope       {:.4} (predicted {:.1}, rms {:.3e}) {}",
                    d.slope,
                    d.predicted_exponent,
                    d.residual,
                    if d.pass { "PASS" } else { "FAIL" }
                );
            }
            Err(e) => {
                let _ = writeln!(s, "decay slope       rejected: {e}");
            }
        }
        match &self.pushforward {
            Ok(p) => {
                let _ = writeln!(
                    s,
                    "pushforward det   [{:.4e}, {:.4e}] {}",
                    p.b0,
                    p.b1,
                    if p.pass { "PASS" } else { "FAIL" }
                );
            }
            Err(e) => {
                let _ = writeln!(s, "pushforward       rejected: {e}");
            }
        }
        if let Some(f) = &self.fiber {
            let _ = writeln!(
                s,
                "fiber collapse    max U'' ratio {:.3e} {}",
                f.ratio,
                if f.pass { "PASS" } else { "FAIL" }
            );
        }
        if let Ok(c) = &self.contracted {
            let _ = writeln!(s, "pairing with {}    {:.3e}", c.curve, c.terminal);
        }
        s
    }
}

/// Terminal analysis of a completed run.
pub fn analyze(ledger: &RunLedger, window: (f64, f64), rho_cut: f64) -> Result<SingularityReport> {
    let scenario = ledger.scenario.build()?;
    ledger.check_scenario(&scenario)?;
    let op = FlowOperator::new(&scenario);
    let s0 = locate_s0(&op, &ledger.terminal, None);
    let decay = fit_decay(&scenario, &op, &ledger.terminal, window).map_err(|e| e.to_string());
    let pushforward = probe_pushforward(&scenario, ledger, rho_cut).map_err(|e| e.to_string());
    let fiber =
        (scenario.kind() == ContractionKind::FiberType).then(|| fiber_collapse(&op, ledger));
    let contracted = contracted_pairing(&scenario, ledger).map_err(|e| e.to_string());
    Ok(SingularityReport {
        scenario_hash: ledger.scenario_hash.clone(),
        kind: scenario.kind(),
        t_theory: ledger.termination.t_theory,
        t_numeric: ledger.t_numeric(),
        s0,
        decay,
        pushforward,
        fiber,
        contracted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{RhoGrid, ScenarioSpec};
    use crate::flow::{run_flow, FlowConfig};
    use crate::picard::{DivisorClass, SurfaceKind};

    fn scenario(ample: &[i64], n: usize) -> Scenario {
        ScenarioSpec::new(
            SurfaceKind::Hirzebruch(1),
            DivisorClass::from_ints(ample),
            RhoGrid::new(15.0, n).unwrap(),
        )
        .build()
        .unwrap()
    }

    #[test]
    fn least_squares_recovers_a_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (s, i, r) = least_squares(&xs, &ys);
        assert!((s - 2.0).abs() < 1e-12 && (i + 1.0).abs() < 1e-12 && r < 1e-12);
    }

    #[test]
    fn no_degeneration_early_on() {
        let sc = scenario(&[4, -1], 512);
        let cfg = FlowConfig {
            t_end: 0.3,
            ..FlowConfig::default()
        };
        let (ledger, _) = run_flow(&sc, &cfg).unwrap();
        let op = FlowOperator::new(&sc);
        let s0 = locate_s0(&op, &ledger.terminal, None);
        assert_eq!(s0.locus, Locus::Empty);
        let fit = fit_decay(&sc, &op, &ledger.terminal, DEFAULT_FIT_WINDOW).unwrap();
        assert!(fit.slope.abs() <= 0.1, "slope {}", fit.slope);
    }

    #[test]
    fn fiber_scenario_is_rejected_by_divisorial_probes() {
        let sc = scenario(&[2, -1], 256);
        let cfg = FlowConfig {
            t_end: 0.1,
            ..FlowConfig::default()
        };
        let (ledger, _) = run_flow(&sc, &cfg).unwrap();
        let op = FlowOperator::new(&sc);
        assert!(probe_pushforward(&sc, &ledger, 0.0).is_err());
        assert!(fit_decay(&sc, &op, &ledger.terminal, DEFAULT_FIT_WINDOW).is_err());
    }

    #[test]
    fn window_must_sit_near_the_lower_end() {
        let sc = scenario(&[4, -1], 256);
        let op = FlowOperator::new(&sc);
        let snap = Snapshot {
            t: 0.0,
            u: vec![0.0; 256],
        };
        assert!(fit_decay(&sc, &op, &snap, (-4.0, 2.0)).is_err());
        assert!(fit_decay(&sc, &op, &snap, (-12.0, -6.0)).is_ok());
    }
}
