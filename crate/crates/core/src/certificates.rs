//! Explicit super/sub-solutions and a-priori bound monitors evaluated over a
//! recorded run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ansatz::{Scenario, ScenarioSpec};
use crate::error::{LabError, Result};
use crate::flow::{rescaled_run, FlowConfig, FlowOperator, RescaleReport, RunLedger};
use crate::picard::{b_of, class_path, Rational};

/// Slack allowed by the sandwich check.
pub const SANDWICH_SLACK: f64 = 1e-6;
/// Slack on `max v ≤ max f`.
pub const V_UPPER_SLACK: f64 = 1e-3;
/// Per-coefficient tolerance of the class-tracking check.
pub const CLASS_TRACKING_TOL: f64 = 1e-3;
/// Tolerance of the rescale-covariance check.
pub const RESCALE_TOL: f64 = 1e-3;
/// Allowed relative drift of measured constants under grid refinement.
pub const STABILITY_DRIFT: f64 = 0.1;
/// Distance from `T` excluded from bounds that blow up at the singular time.
pub const T_MARGIN: f64 = 0.05;

/// Super- and sub-solutions depending on `t` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub scenario_hash: String,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub k_sup: f64,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub k_inf: f64,
    pub dim: u32,
    /// Nef threshold; `None` when `K` is nef.
    pub r: Option<f64>,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub t_singular: f64,
}

impl Envelope {
    /// `u⁺(t) = (1 - e^{-t})K_sup`.
    pub fn u_plus(&self, t: f64) -> f64 {
        -(-t).exp_m1() * self.k_sup
    }

    /// `u⁻(t) = e^{-t}∫₀ᵗ e^s (n log(b(s)/r) + K_inf) ds`, in closed form.
    pub fn u_minus(&self, t: f64) -> f64 {
        let n = self.dim as f64;
        let a = -(-t).exp_m1();
        match self.r {
            Some(r) => {
                let w = t.exp();
                let g = |w: f64| -xlogx(r + 1.0 - w) - xlogx(w);
                self.k_inf * a + n * (-t).exp() * (g(w) - g(1.0) - r.ln() * (w - 1.0))
            }
            // b = e^{-t} and no r: ∫ e^s(-ns) ds
            None => self.k_inf * a + n * (1.0 - t - (-t).exp()),
        }
    }

    /// `n log(b(t)/r) + K_inf`, the forcing of the sub-solution ODE.
    pub fn lower_forcing(&self, t: f64) -> f64 {
        let n = self.dim as f64;
        let b = b_of(self.r, t);
        let lr = self.r.map_or(0.0, f64::ln);
        n * (b.ln() - lr) + self.k_inf
    }

    /// Residuals of `∂_t u⁺ + u⁺ = K_sup` and `∂_t u⁻ + u⁻ = n log(b/r) + K_inf`
    /// at `t`, by fourth-order centered differences.
    pub fn ode_defect(&self, t: f64) -> (f64, f64) {
        let gap = if self.t_singular.is_finite() {
            self.t_singular - t
        } else {
            1.0
        };
        let h = 1e-3 * gap.clamp(1e-6, 1.0);
        let d = |f: &dyn Fn(f64) -> f64| {
            (f(t - 2.0 * h) - 8.0 * f(t - h) + 8.0 * f(t + h) - f(t + 2.0 * h)) / (12.0 * h)
        };
        let up = d(&|s| self.u_plus(s)) + self.u_plus(t) - self.k_sup;
        let lo = d(&|s| self.u_minus(s)) + self.u_minus(t) - self.lower_forcing(t);
        (up.abs(), lo.abs())
    }
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Constants of the envelope from the reference family of `scenario`.
pub fn build_envelope(scenario: &Scenario) -> Envelope {
    let op = FlowOperator::new(scenario);
    let f = op.f();
    let t_sing = scenario.singular_time();
    let k_inf = f.iter().copied().fold(f64::INFINITY, f64::min);
    let objective = |t: f64| -> f64 {
        let d = op.det_ratio(&op.reference(t));
        d.iter()
            .zip(f)
            .map(|(d, f)| {
                if *d > 0.0 {
                    d.ln() + f
                } else {
                    f64::NEG_INFINITY
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let t_hi = if t_sing.is_finite() { t_sing } else { 10.0 };
    let samples = 400;
    let ts: Vec<f64> = (0..samples)
        .map(|i| t_hi * i as f64 / samples as f64)
        .collect();
    let (mut best_i, mut k_sup) = (0, objective(0.0));
    for (i, &t) in ts.iter().enumerate() {
        let v = objective(t);
        if v > k_sup {
            k_sup = v;
            best_i = i;
        }
    }
    // Golden-section refinement around the best sample.
    let (mut lo, mut hi) = (
        ts[best_i.saturating_sub(1)],
        ts.get(best_i + 1).copied().unwrap_or(t_hi * (1.0 - 1e-9)),
    );
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if objective(a) > objective(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    k_sup = k_sup.max(objective(0.5 * (lo + hi)));
    Envelope {
        scenario_hash: scenario.hash(),
        k_sup,
        k_inf,
        dim: scenario.dim(),
        r: scenario.r(),
        t_singular: t_sing,
    }
}

/// `∫₀ᵀ log b(t) dt` by composite Simpson on `panels` panels, after subtracting
/// the endpoint model `log(T - t)` (exact slope `b'(T) = -1`) and integrating
/// it in closed form.
pub fn integral_log_b(r: f64, panels: usize) -> f64 {
    let t_end = (r + 1.0).ln();
    let smooth = |t: f64| {
        let d = t_end - t;
        if d < 1e-6 {
            // b = 1 - e^{-d}·... expanded: b/d = 1 - d/2 + O(d²)
            (1.0 - 0.5 * d).ln()
        } else {
            (b_of(Some(r), t) / d).ln()
        }
    };
    let n = panels + panels % 2;
    let h = t_end / n as f64;
    let mut acc = smooth(0.0) + smooth(t_end);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * smooth(i as f64 * h);
    }
    acc * h / 3.0 + (t_end * t_end.ln() - t_end)
}

/// One line of a [`CertificateReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub name: String,
    pub t_range: (f64, f64),
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub worst_margin: f64,
    pub witness_node: Option<usize>,
    pub pass: bool,
    /// Measured constants (C₀, C₁, λ, ...).
    #[serde(default)]
    #[serde(with = "crate::serde_ext::map_ext")]
    pub measured: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub scenario_hash: String,
    pub records: Vec<CertificateRecord>,
}

impl CertificateReport {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CertificateRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<20} {:>19} {:>13} {:>8}  result",
            "check", "t range", "worst margin", "node"
        );
        for r in &self.records {
            let node = r.witness_node.map_or("-".to_string(), |n| n.to_string());
            let _ = writeln!(
                s,
                "{:<20} [{:>7.4}, {:>7.4}] {:>13.4e} {:>8}  {}",
                r.name,
                r.t_range.0,
                r.t_range.1,
                r.worst_margin,
                node,
                if r.pass { "PASS" } else { "FAIL" }
            );
            for (k, v) in &r.measured {
                let _ = writeln!(s, "    {k} = {v:.6e}");
            }
        }
        s
    }
}

fn t_span(ledger: &RunLedger) -> (f64, f64) {
    (
        ledger.steps.first().map_or(0.0, |s| s.t),
        ledger.steps.last().map_or(0.0, |s| s.t),
    )
}

/// Worst signed margin of `u⁻ ≤ u ≤ u⁺` over every accepted step.
pub fn check_sandwich(ledger: &RunLedger, env: &Envelope) -> Result<CertificateRecord> {
    if ledger.scenario_hash != env.scenario_hash {
        return Err(LabError::ScenarioMismatch(format!(
            "ledger {} vs envelope {}",
            ledger.scenario_hash, env.scenario_hash
        )));
    }
    let mut worst = f64::INFINITY;
    let mut node = None;
    let mut upper = f64::INFINITY;
    let mut lower = f64::INFINITY;
    for s in &ledger.steps {
        let up = env.u_plus(s.t) - s.u.max;
        let lo = s.u.min - env.u_minus(s.t);
        upper = upper.min(up);
        lower = lower.min(lo);
        if up < worst {
            worst = up;
            node = Some(s.u.argmax);
        }
        if lo < worst {
            worst = lo;
            node = Some(s.u.argmin);
        }
    }
    let measured = BTreeMap::from([
        ("K_sup".to_string(), env.k_sup),
        ("K_inf".to_string(), env.k_inf),
        ("upper_margin".to_string(), upper),
        ("lower_margin".to_string(), lower),
    ]);
    Ok(CertificateRecord {
        name: "sandwich".into(),
        t_range: t_span(ledger),
        worst_margin: worst,
        witness_node: node,
        pass: worst >= -SANDWICH_SLACK,
        measured,
    })
}

/// Upper bound for the run horizon of bounds that degenerate at `T`.
fn horizon(ledger: &RunLedger) -> f64 {
    let t = ledger.termination.t_theory;
    if t.is_finite() {
        t - T_MARGIN
    } else {
        f64::INFINITY
    }
}

/// `max v ≤ max f + slack` over the run.
pub fn check_v_upper(ledger: &RunLedger) -> CertificateRecord {
    let max_f = ledger.steps[0].v.max;
    let (mut vmax, mut node) = (f64::NEG_INFINITY, None);
    for s in &ledger.steps {
        if s.v.max > vmax {
            vmax = s.v.max;
            node = Some(s.v.argmax);
        }
    }
    let margin = max_f + V_UPPER_SLACK - vmax;
    CertificateRecord {
        name: "v-upper".into(),
        t_range: t_span(ledger),
        worst_margin: margin,
        witness_node: node,
        pass: margin >= 0.0,
        measured: BTreeMap::from([("max_v".into(), vmax), ("max_f".into(), max_f)]),
    }
}

fn min_v(ledger: &RunLedger) -> (f64, Option<usize>, f64) {
    let until = horizon(ledger);
    let mut best = (f64::INFINITY, None, 0.0);
    for s in ledger.steps.iter().filter(|s| s.t <= until) {
        best.2 = s.t;
        if s.v.min < best.0 {
            best.0 = s.v.min;
            best.1 = Some(s.v.argmin);
        }
    }
    best
}

fn rel_drift(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// `min v` over `[0, T - 0.05]` is finite, and stable against `companion`
/// (the same scenario on a refined grid) when one is given.
pub fn check_v_lower(ledger: &RunLedger, companion: Option<&RunLedger>) -> CertificateRecord {
    let (v, node, t_hi) = min_v(ledger);
    let mut measured = BTreeMap::from([("min_v".to_string(), v)]);
    let mut pass = v.is_finite();
    let mut margin = if v.is_finite() {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    if let Some(c) = companion {
        let (w, _, _) = min_v(c);
        let drift = rel_drift(v, w);
        measured.insert("min_v_companion".into(), w);
        measured.insert("drift".into(), drift);
        margin = STABILITY_DRIFT - drift;
        pass &= drift <= STABILITY_DRIFT;
    }
    CertificateRecord {
        name: "v-lower".into(),
        t_range: (0.0, t_hi),
        worst_margin: margin,
        witness_node: node,
        pass,
        measured,
    }
}

/// `[C₀, C₁]` from the eigen-ratios `U'/U₀'`, `U''/U₀''` over `t ≤ t0`.
pub fn equivalence_constants(ledger: &RunLedger, t0: f64) -> (f64, f64, Option<usize>) {
    let mut c0 = f64::INFINITY;
    let mut c1 = f64::NEG_INFINITY;
    let mut node = None;
    for s in ledger.steps.iter().filter(|s| s.t <= t0 + 1e-12) {
        for e in [s.p_ratio, s.q_ratio] {
            if e.min < c0 {
                c0 = e.min;
                node = Some(e.argmin);
            }
            c1 = c1.max(e.max);
        }
    }
    (c0, c1, node)
}

/// Joint infimum over `ρ` and `t ∈ [0, t0]` of the Ricci eigenvalues of the
/// reference family, a finite-sample curvature proxy.
pub fn reference_curvature_floor(scenario: &Scenario, t0: f64) -> f64 {
    let Some(c) = scenario.as_calabi() else {
        return 0.0;
    };
    let op = FlowOperator::new(scenario);
    let grid = op.grid();
    let h = grid.spacing();
    let kf = c.k as f64;
    let mut floor = f64::INFINITY;
    for i in 0..=40 {
        let t = t0 * i as f64 / 40.0;
        let m = op.reference(t);
        let pmax = m.p.iter().copied().fold(0.0, f64::max);
        let qmax = m.q.iter().copied().fold(0.0, f64::max);
        let w: Vec<f64> =
            m.p.iter()
                .zip(&m.q)
                .zip(grid.rho())
                .map(|((p, q), r)| (p * q).ln() - r)
                .collect();
        for j in 1..grid.nodes - 1 {
            // Skip the ends where U₀'' is too small for stable differences.
            if m.p[j] < 1e-3 * pmax || m.q[j] < 1e-3 * qmax {
                continue;
            }
            let w1 = (w[j + 1] - w[j - 1]) / (2.0 * h);
            let w2 = (w[j + 1] - 2.0 * w[j] + w[j - 1]) / (h * h);
            let kp = (-w1 - (kf - 2.0) / kf) / m.p[j];
            let kq = -w2 / m.q[j];
            floor = floor.min(kp).min(kq);
        }
    }
    floor
}

/// Eigen-ratio bounds `C₀ g₀ ≤ g ≤ C₁ g₀` for `t ≤ t0`, plus the monitored
/// `sup e^{-λu}(n + Δ_{g₀(t)}u)` over snapshots.
pub fn check_metric_equivalence(
    ledger: &RunLedger,
    scenario: &Scenario,
    t0: f64,
    companion: Option<&RunLedger>,
) -> Result<CertificateRecord> {
    ledger.check_scenario(scenario)?;
    if t0 >= ledger.termination.t_theory {
        return Err(LabError::Precondition(format!(
            "t0 = {t0} is not below the singular time {}",
            ledger.termination.t_theory
        )));
    }
    let (c0, c1, node) = equivalence_constants(ledger, t0);
    let kappa = reference_curvature_floor(scenario, t0);
    let lambda = (1.0 - kappa).max(0.0) + 0.5;
    let op = FlowOperator::new(scenario);
    let mut z_sup: f64 = 0.0;
    for snap in ledger.snapshots_until(t0) {
        let m = op.metric(&snap.u, snap.t);
        let rt = op.reference(snap.t);
        for j in 0..m.p.len() {
            let tr = m.p[j] / rt.p[j] + m.q[j] / rt.q[j];
            z_sup = z_sup.max((-lambda * snap.u[j]).exp() * tr);
        }
    }
    let mut measured = BTreeMap::from([
        ("C0".to_string(), c0),
        ("C1".to_string(), c1),
        ("lambda".to_string(), lambda),
        ("curvature_floor".to_string(), kappa),
        ("z_sup".to_string(), z_sup),
    ]);
    let mut pass = c0 > 0.0 && c1.is_finite() && z_sup.is_finite();
    let mut margin = c0;
    if let Some(c) = companion {
        let (d0, d1, _) = equivalence_constants(c, t0);
        let drift = rel_drift(c0, d0).max(rel_drift(c1, d1));
        measured.insert("drift".into(), drift);
        pass &= drift <= STABILITY_DRIFT;
        margin = margin.min(STABILITY_DRIFT - drift);
    }
    Ok(CertificateRecord {
        name: "metric-equivalence".into(),
        t_range: (0.0, t0),
        worst_margin: margin,
        witness_node: node,
        pass,
        measured,
    })
}

/// `tr_{g₀(t)} g = n + Δ_{g₀(t)}u` stays positive and bounded for `t ≤ t0`.
pub fn check_laplacian_upper(ledger: &RunLedger, t0: f64) -> CertificateRecord {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut node = None;
    for s in ledger.steps.iter().filter(|s| s.t <= t0 + 1e-12) {
        lo = lo.min(s.trace_t.min);
        if s.trace_t.max > hi {
            hi = s.trace_t.max;
            node = Some(s.trace_t.argmax);
        }
    }
    CertificateRecord {
        name: "laplacian-upper".into(),
        t_range: (0.0, t0),
        worst_margin: lo,
        witness_node: node,
        pass: lo > 0.0 && hi.is_finite(),
        measured: BTreeMap::from([("trace_min".into(), lo), ("trace_max".into(), hi)]),
    }
}

/// `class_of(g(t))` against the class path for `t ≤ T - 0.05`.
pub fn check_class_tracking(ledger: &RunLedger, scenario: &Scenario) -> Result<CertificateRecord> {
    ledger.check_scenario(scenario)?;
    let until = horizon(ledger);
    let mut worst: f64 = 0.0;
    let mut t_hi = 0.0;
    for s in ledger.steps.iter().filter(|s| s.t <= until) {
        let a = class_path(&scenario.spec().ample, scenario.surface(), s.t)?;
        if a.coeffs.len() != s.class.len() {
            return Err(LabError::DimensionMismatch {
                expected: a.coeffs.len(),
                got: s.class.len(),
            });
        }
        for (x, y) in a.coeffs.iter().zip(&s.class) {
            worst = worst.max((x - y).abs());
        }
        t_hi = s.t;
    }
    Ok(CertificateRecord {
        name: "class-tracking".into(),
        t_range: (0.0, t_hi),
        worst_margin: CLASS_TRACKING_TOL - worst,
        witness_node: None,
        pass: worst <= CLASS_TRACKING_TOL,
        measured: BTreeMap::from([("max_error".into(), worst)]),
    })
}

/// Runs [`rescaled_run`] for each factor and checks the defect.
pub fn check_rescale_covariance(
    spec: &ScenarioSpec,
    cfg: &FlowConfig,
    factors: &[Rational],
) -> Result<(CertificateRecord, Vec<RescaleReport>)> {
    let reports = factors
        .iter()
        .map(|k| rescaled_run(*k, spec, cfg, 10))
        .collect::<Result<Vec<_>>>()?;
    let worst = reports.iter().map(|r| r.defect).fold(0.0, f64::max);
    let mut measured = BTreeMap::new();
    for r in &reports {
        measured.insert(
            format!("defect_K={}", crate::picard::format_rational(&r.factor)),
            r.defect,
        );
    }
    let t_hi = reports
        .iter()
        .flat_map(|r| r.samples.last().map(|s| s.s))
        .fold(0.0, f64::max);
    Ok((
        CertificateRecord {
            name: "rescale-covariance".into(),
            t_range: (0.0, t_hi),
            worst_margin: RESCALE_TOL - worst,
            witness_node: None,
            pass: worst <= RESCALE_TOL,
            measured,
        },
        reports,
    ))
}

/// Which checks [`certify`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    Sandwich,
    VUpper,
    VLower,
    LaplacianUpper,
    MetricEquivalence,
    ClassTracking,
    RescaleCovariance,
}

impl Check {
    pub const DEFAULT: [Check; 6] = [
        Check::Sandwich,
        Check::VUpper,
        Check::VLower,
        Check::LaplacianUpper,
        Check::MetricEquivalence,
        Check::ClassTracking,
    ];
}

/// Evaluates every enabled check on `ledger`. `companion` is an optional run of
/// the same scenario on a refined grid for the stability comparisons.
pub fn certify(
    ledger: &RunLedger,
    checks: &[Check],
    companion: Option<&RunLedger>,
) -> Result<CertificateReport> {
    let scenario = ledger.scenario.build()?;
    ledger.check_scenario(&scenario)?;
    let t0 = horizon(ledger).min(ledger.terminal.t);
    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for &c in checks {
        if !seen.insert(c) {
            continue;
        }
        let rec = match c {
            Check::Sandwich => check_sandwich(ledger, &build_envelope(&scenario))?,
            Check::VUpper => check_v_upper(ledger),
            Check::VLower => check_v_lower(ledger, companion),
            Check::LaplacianUpper => check_laplacian_upper(ledger, t0),
            Check::MetricEquivalence => check_metric_equivalence(ledger, &scenario, t0, companion)?,
            Check::ClassTracking => check_class_tracking(ledger, &scenario)?,
            Check::RescaleCovariance => {
                let factors = [
                    Rational::new(1, 2),
                    Rational::from_integer(2),
                    Rational::from_integer(5),
                ];
                check_rescale_covariance(&ledger.scenario, &ledger.config, &factors)?.0
            }
        };
        records.push(rec);
    }
    Ok(CertificateReport {
        scenario_hash: ledger.scenario_hash.clone(),
        records,
    })
}
