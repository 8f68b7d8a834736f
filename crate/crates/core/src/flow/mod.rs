//! Time integration of `∂_t u = log det((g₀ + a(t)η + ddᶜu)/g₀) - u + f`,
//! `u(·, 0) = 0`, on the symmetry axis.

mod gauge;
mod operator;
mod rescale;

use serde::{Deserialize, Serialize};

pub use gauge::{gauge_comparison, random_gauge, GaugeReport};
pub use operator::{FlowOperator, MetricValues};
pub use rescale::{k_of, rescaled_run, t_of, RescaleReport, RescaleSample};

use crate::ansatz::{class_of, InvariantForm, Profile, Scenario, ScenarioSpec};
use crate::error::{LabError, Result};
use crate::picard::{a_of, intersect_real, SurfaceKind};
use operator::solve_tridiagonal;

/// Volume-identity defect above which a run is stopped.
pub const VOLUME_DRIFT_LIMIT: f64 = 1e-2;
/// Implicit runs take their first step at `dt_init / STARTUP_DIVISOR`.
pub const STARTUP_DIVISOR: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Explicit RK4 on flat scenarios, backward Euler otherwise.
    Auto,
    BackwardEulerNewton,
    /// Trapezoid stage followed by a BDF2 stage; L-stable and second order.
    TrBdf2Newton,
    ExplicitRk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub t_end: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Relative floor on `min(U'/U₀', U''/U₀'')` below which the run stops.
    pub positivity_floor: f64,
    pub scheme: Scheme,
    /// Cadence of full-profile snapshots; `None` keeps only the ends.
    pub snapshot_every: Option<f64>,
    /// Extra snapshot times, hit exactly.
    pub snapshot_times: Vec<f64>,
    pub max_steps: usize,
    /// Hard cap on explicit sub-steps per step.
    pub max_substeps: u64,
    /// Largest accepted `|log(U'_new/U'_old)|` or `|log(U''_new/U''_old)|`
    /// per step; steps changing the metric faster are retried smaller.
    pub max_log_change: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            dt_min: 1e-11,
            t_end: 5.0,
            newton_tol: 1e-10,
            newton_max_iter: 30,
            positivity_floor: 1e-8,
            scheme: Scheme::Auto,
            snapshot_every: Some(0.05),
            snapshot_times: vec![],
            max_steps: 2_000_000,
            max_substeps: 10_000_000,
            max_log_change: 0.05,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LabError::Config(m.to_string()));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init) {
            return bad("need 0 < dt_min <= dt_init");
        }
        if !(self.positivity_floor > 0.0) {
            return bad("positivity_floor must be positive");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol must be positive");
        }
        if !(self.t_end > 0.0) {
            return bad("t_end must be positive");
        }
        if !(self.max_log_change > 0.0) {
            return bad("max_log_change must be positive");
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter must be at least 1");
        }
        if let Some(s) = self.snapshot_every {
            if !(s > 0.0) {
                return bad("snapshot_every must be positive");
            }
        }
        Ok(())
    }

    /// Runs until the flow degenerates: `t_end` just past the singular time.
    pub fn until_singular(scenario: &Scenario) -> Self {
        let t = scenario.singular_time();
        Self {
            t_end: if t.is_finite() { t + 0.5 } else { 5.0 },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub u: Profile,
    pub v: Profile,
    pub g: InvariantForm,
    pub phi_residual: f64,
    pub step_count: usize,
    pub degenerate: bool,
}

impl FlowState {
    pub fn initial(op: &FlowOperator) -> Self {
        let grid = op.grid();
        let u = vec![0.0; grid.nodes];
        let (v, m) = op.rhs(&u, 0.0).expect("g₀ is positive");
        Self {
            t: 0.0,
            u: Profile::new(grid, u),
            v: Profile::new(grid, v),
            g: op.form(&m),
            phi_residual: 0.0,
            step_count: 0,
            degenerate: false,
        }
    }

    /// Rebuilds a state from a stored potential.
    pub fn from_potential(op: &FlowOperator, t: f64, u: Vec<f64>) -> Result<Self> {
        let (v, m) = op
            .rhs(&u, t)
            .ok_or_else(|| LabError::Precondition(format!("metric not positive at t = {t}")))?;
        let grid = op.grid();
        Ok(Self {
            t,
            u: Profile::new(grid, u),
            v: Profile::new(grid, v),
            g: op.form(&m),
            phi_residual: 0.0,
            step_count: 0,
            degenerate: false,
        })
    }

    /// `F = ∂_t u + u - f - log det(g₀(t)/g₀)`, which is `log det(g/g₀(t))`.
    pub fn f_diagnostic(&self, op: &FlowOperator) -> Profile {
        let r = op.reference(self.t);
        let d = op.det_ratio(&r);
        let vals = self
            .v
            .values
            .iter()
            .zip(&self.u.values)
            .zip(op.f())
            .zip(&d)
            .map(|(((v, u), f), d)| v + u - f - d.ln())
            .collect();
        Profile::new(op.grid(), vals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    ReachedEnd,
    PositivityFloor,
    NewtonFailure,
    VolumeDrift,
    MaxSteps,
}

impl TerminationReason {
    pub fn is_degenerate(self) -> bool {
        matches!(self, Self::PositivityFloor | Self::NewtonFailure)
    }
}

/// Extremes of a nodal quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
    pub argmin: usize,
    pub argmax: usize,
}

impl Extremes {
    pub fn of(v: &[f64]) -> Self {
        let mut e = Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            argmin: 0,
            argmax: 0,
        };
        for (i, &x) in v.iter().enumerate() {
            if x < e.min {
                e.min = x;
                e.argmin = i;
            }
            if x > e.max {
                e.max = x;
                e.argmax = i;
            }
        }
        e
    }
}

/// Scalar diagnostics of one accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub iterations: usize,
    pub newton_residual: f64,
    pub u: Extremes,
    pub v: Extremes,
    /// `det(g/g₀)`.
    pub det: Extremes,
    /// `det(g/g₀(t))`.
    pub det_t: Extremes,
    /// `U'/U₀'` and `U''/U₀''`.
    pub p_ratio: Extremes,
    pub q_ratio: Extremes,
    /// `tr_{g₀(t)} g`.
    pub trace_t: Extremes,
    /// `(⟨g, E⟩, ⟨g, F⟩)` on Hirzebruch surfaces.
    pub pairings: Option<(f64, f64)>,
    pub class: Vec<f64>,
    pub volume_residual: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub reason: TerminationReason,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub t_theory: f64,
    /// Last accepted time of a degenerate run.
    pub t_numeric: Option<f64>,
}

/// Append-only record of a run; enough to rebuild every accepted snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub scenario: ScenarioSpec,
    pub scenario_hash: String,
    pub config: FlowConfig,
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub terminal: Snapshot,
    pub termination: Termination,
}

impl RunLedger {
    pub fn t_numeric(&self) -> Option<f64> {
        self.termination.t_numeric
    }

    pub fn snapshot_near(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .chain(std::iter::once(&self.terminal))
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    /// Snapshots at or before `t`.
    pub fn snapshots_until(&self, t: f64) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.iter().filter(move |s| s.t <= t)
    }

    pub fn check_scenario(&self, scenario: &Scenario) -> Result<()> {
        if self.scenario_hash != scenario.hash() {
            return Err(LabError::ScenarioMismatch(format!(
                "ledger {} vs scenario {}",
                self.scenario_hash,
                scenario.hash()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `|∫ exp(v + u - f) dV₀ - Vol_{g(t)}| / Vol₀`.
pub fn volume_identity_residual(state: &FlowState, op: &FlowOperator, scenario: &Scenario) -> f64 {
    let m = MetricValues {
        p: state.g.p.values.clone(),
        q: state.g.q.values.clone(),
    };
    let lhs = op.volume_of(&m);
    let vol0 = op.initial_volume();
    (lhs - vol0 * volume_factor(scenario, state.t)).abs() / vol0
}

/// `Vol(A(t)) / Vol(A)`.
fn volume_factor(scenario: &Scenario, t: f64) -> f64 {
    let s = scenario.surface();
    let a = &scenario.spec().ample.to_real().coeffs;
    let at = crate::picard::class_path(&scenario.spec().ample, s, t)
        .expect("scenario ample class is valid")
        .coeffs;
    let num = intersect_real(&at, &at, s);
    let den = intersect_real(a, a, s);
    match s.kind {
        SurfaceKind::Torus(n) => (num / den).powf(n as f64 / 2.0),
        _ => num / den,
    }
}

/// `u + a(t)h`: the potential solving the flow for `(η - ddᶜh, f + h)`.
pub fn gauge_change(u: &Profile, h: &Profile, t: f64) -> Profile {
    let a = a_of(t);
    u.zip_with(h, |u, h| u + a * h)
}

/// Solver statistics of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Newton iterations, or explicit sub-steps.
    pub iterations: usize,
    /// Final `‖u - θF(u) - w‖_∞` of the implicit solve.
    pub residual: f64,
}

enum StepFailure {
    /// The step did not converge; retry smaller.
    Retry,
    Fatal(LabError),
}

struct Accepted {
    u: Vec<f64>,
    v: Vec<f64>,
    m: MetricValues,
    iterations: usize,
    residual: f64,
}

/// The flow integrator for one scenario.
pub struct Integrator<'a> {
    pub scenario: &'a Scenario,
    pub op: FlowOperator,
    pub cfg: FlowConfig,
}

impl<'a> Integrator<'a> {
    pub fn new(scenario: &'a Scenario, cfg: FlowConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            scenario,
            op: FlowOperator::new(scenario),
            cfg,
        })
    }

    /// The scheme actually used, with [`Scheme::Auto`] resolved.
    pub fn scheme(&self) -> Scheme {
        match self.cfg.scheme {
            Scheme::Auto if self.op.is_flat() => Scheme::ExplicitRk4,
            Scheme::Auto => Scheme::BackwardEulerNewton,
            s => s,
        }
    }

    /// Solves `u - θF(u, τ) = w` by damped Newton starting from `guess`.
    fn implicit_solve(
        &self,
        theta: f64,
        tau: f64,
        w: &[f64],
        guesses: &[&[f64]],
    ) -> std::result::Result<Accepted, StepFailure> {
        let residual = |u: &[f64]| -> Option<(Vec<f64>, Vec<f64>, MetricValues, f64)> {
            let (v, m) = self.op.rhs(u, tau)?;
            let g: Vec<f64> = u
                .iter()
                .zip(&v)
                .zip(w)
                .map(|((u, v), w)| u - theta * v - w)
                .collect();
            let norm = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if !norm.is_finite() {
                return None;
            }
            Some((g, v, m, norm))
        };
        let mut start = None;
        for guess in guesses {
            if let Some(r) = residual(guess) {
                start = Some((guess.to_vec(), r));
                break;
            }
        }
        let Some((mut u, (mut g, mut v, mut m, mut norm))) = start else {
            return Err(StepFailure::Retry);
        };
        for it in 0..=self.cfg.newton_max_iter {
            if norm <= self.cfg.newton_tol {
                return Ok(Accepted {
                    u,
                    v,
                    m,
                    iterations: it,
                    residual: norm,
                });
            }
            if it == self.cfg.newton_max_iter {
                break;
            }
            let mut jac = self.op.jacobian(&m);
            for i in 0..jac.di.len() {
                jac.lo[i] *= -theta;
                jac.up[i] *= -theta;
                jac.di[i] = 1.0 - theta * jac.di[i];
            }
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let delta = solve_tridiagonal(&jac, &rhs).ok_or(StepFailure::Retry)?;
            // Where U'' is tiny the residual has a round-off floor of order
            // dt·ε/(h²U''); a Newton update below tolerance also converges.
            let step_norm = delta.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if step_norm <= self.cfg.newton_tol {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(u, d)| u + d).collect();
                if let Some((_, v2, m2, n2)) = residual(&trial) {
                    return Ok(Accepted {
                        u: trial,
                        v: v2,
                        m: m2,
                        iterations: it + 1,
                        residual: n2,
                    });
                }
            }
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = u.iter().zip(&delta).map(|(u, d)| u + lambda * d).collect();
                if let Some((g2, v2, m2, n2)) = residual(&trial) {
                    if n2 <= (1.0 - 1e-4 * lambda) * norm || n2 <= self.cfg.newton_tol {
                        u = trial;
                        g = g2;
                        v = v2;
                        m = m2;
                        norm = n2;
                        break;
                    }
                }
                lambda *= 0.5;
                if lambda < 1.0 / 1024.0 {
                    return Err(StepFailure::Retry);
                }
            }
        }
        Err(StepFailure::Retry)
    }

    fn step_implicit(
        &self,
        t: f64,
        u: &[f64],
        v: &[f64],
        dt: f64,
    ) -> std::result::Result<Accepted, StepFailure> {
        let predict =
            |tau: f64| -> Vec<f64> { u.iter().zip(v).map(|(u, v)| u + (tau - t) * v).collect() };
        match self.scheme() {
            Scheme::Auto | Scheme::BackwardEulerNewton => {
                let p = predict(t + dt);
                self.implicit_solve(dt, t + dt, u, &[&p, u])
            }
            Scheme::TrBdf2Newton => {
                let gamma = 2.0 - std::f64::consts::SQRT_2;
                let tg = t + gamma * dt;
                let w1: Vec<f64> = u
                    .iter()
                    .zip(v)
                    .map(|(u, v)| u + 0.5 * gamma * dt * v)
                    .collect();
                let p1 = predict(tg);
                let s1 = self.implicit_solve(0.5 * gamma * dt, tg, &w1, &[&p1, u])?;
                let c = 1.0 / (gamma * (2.0 - gamma));
                let w2: Vec<f64> =
                    s1.u.iter()
                        .zip(u)
                        .map(|(ug, un)| c * ug - c * (1.0 - gamma).powi(2) * un)
                        .collect();
                let p2 = predict(t + dt);
                let theta = (1.0 - gamma) / (2.0 - gamma) * dt;
                let mut s2 = self.implicit_solve(theta, t + dt, &w2, &[&p2, &s1.u, u])?;
                s2.iterations += s1.iterations;
                s2.residual = s2.residual.max(s1.residual);
                Ok(s2)
            }
            Scheme::ExplicitRk4 => self.step_rk4(t, u, v, dt),
        }
    }

    fn step_rk4(
        &self,
        t: f64,
        u: &[f64],
        v: &[f64],
        dt: f64,
    ) -> std::result::Result<Accepted, StepFailure> {
        let h = self.op.grid().spacing();
        let m0 = self.op.metric(u, t);
        let qmin = m0.q.iter().copied().fold(f64::INFINITY, f64::min);
        if !(qmin > 0.0) {
            return Err(StepFailure::Retry);
        }
        let guard = 0.25 * h * h * qmin;
        let sub = (dt / guard).ceil().max(1.0);
        if sub > self.cfg.max_substeps as f64 {
            return Err(StepFailure::Fatal(LabError::TooStiff(sub as u64)));
        }
        let sub = sub as u64;
        let ds = dt / sub as f64;
        let mut u = u.to_vec();
        let mut k1 = v.to_vec();
        let axpy = |u: &[f64], k: &[f64], c: f64| -> Vec<f64> {
            u.iter().zip(k).map(|(u, k)| u + c * k).collect()
        };
        for i in 0..sub {
            let s = t + i as f64 * ds;
            if i > 0 {
                k1 = self.op.rhs(&u, s).ok_or(StepFailure::Retry)?.0;
            }
            let k2 = self
                .op
                .rhs(&axpy(&u, &k1, 0.5 * ds), s + 0.5 * ds)
                .ok_or(StepFailure::Retry)?
                .0;
            let k3 = self
                .op
                .rhs(&axpy(&u, &k2, 0.5 * ds), s + 0.5 * ds)
                .ok_or(StepFailure::Retry)?
                .0;
            let k4 = self
                .op
                .rhs(&axpy(&u, &k3, ds), s + ds)
                .ok_or(StepFailure::Retry)?
                .0;
            for j in 0..u.len() {
                u[j] += ds / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
        }
        let (v, m) = self.op.rhs(&u, t + dt).ok_or(StepFailure::Retry)?;
        Ok(Accepted {
            u,
            v,
            m,
            iterations: sub as usize,
            residual: 0.0,
        })
    }

    /// One step of size `dt` from `state`. `Ok(None)` means the step did not converge and
    /// should be retried with a smaller `dt`.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<Option<(FlowState, StepInfo)>> {
        if state.degenerate {
            return Err(LabError::Precondition("state is degenerate".into()));
        }
        match self.step_implicit(state.t, &state.u.values, &state.v.values, dt) {
            Ok(acc) => {
                let grid = self.op.grid();
                let mut next = FlowState {
                    t: state.t + dt,
                    u: Profile::new(grid, acc.u),
                    v: Profile::new(grid, acc.v),
                    g: self.op.form(&acc.m),
                    phi_residual: 0.0,
                    step_count: state.step_count + 1,
                    degenerate: false,
                };
                next.phi_residual = volume_identity_residual(&next, &self.op, self.scenario);
                Ok(Some((
                    next,
                    StepInfo {
                        iterations: acc.iterations,
                        residual: acc.residual,
                    },
                )))
            }
            Err(StepFailure::Retry) => Ok(None),
            Err(StepFailure::Fatal(e)) => Err(e),
        }
    }

    fn record(&self, state: &FlowState, dt: f64, info: StepInfo) -> StepRecord {
        let m = MetricValues {
            p: state.g.p.values.clone(),
            q: state.g.q.values.clone(),
        };
        let r0 = self.op.initial_reference();
        let rt = self.op.reference(state.t);
        let ratio =
            |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x / y).collect() };
        let p_ratio = ratio(&m.p, &r0.p);
        let q_ratio = ratio(&m.q, &r0.q);
        let det = self.op.det_ratio(&m);
        let det_ref = self.op.det_ratio(&rt);
        let det_t = ratio(&det, &det_ref);
        let trace: Vec<f64> = ratio(&m.p, &rt.p)
            .iter()
            .zip(ratio(&m.q, &rt.q))
            .map(|(a, b)| a + b)
            .collect();
        let (pairings, class) = match self.scenario {
            Scenario::Calabi(c) => {
                let pr = state.g.pairings();
                let class = class_of(&state.g, &c.surface)
                    .map(|c| c.coeffs)
                    .unwrap_or_default();
                (Some(pr), class)
            }
            Scenario::Flat(_) => {
                let a = self.scenario.spec().ample.to_real().coeffs;
                (None, a.iter().map(|c| c * m.p[0]).collect())
            }
        };
        let margin = p_ratio
            .iter()
            .chain(&q_ratio)
            .copied()
            .fold(f64::INFINITY, f64::min);
        StepRecord {
            t: state.t,
            dt,
            iterations: info.iterations,
            newton_residual: info.residual,
            u: Extremes::of(&state.u.values),
            v: Extremes::of(&state.v.values),
            det: Extremes::of(&det),
            det_t: Extremes::of(&det_t),
            p_ratio: Extremes::of(&p_ratio),
            q_ratio: Extremes::of(&q_ratio),
            trace_t: Extremes::of(&trace),
            pairings,
            class,
            volume_residual: state.phi_residual,
            margin,
        }
    }

    /// Output times inside `(0, t_end]`, sorted.
    fn output_times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self.cfg.snapshot_times.clone();
        if let Some(every) = self.cfg.snapshot_every {
            let n = (self.cfg.t_end / every).floor() as usize;
            times.extend((1..=n).map(|i| i as f64 * every));
        }
        let t_sing = self.scenario.singular_time();
        if t_sing.is_finite() {
            times.extend(probe_times(t_sing));
        }
        times.retain(|&t| t > 0.0 && t <= self.cfg.t_end);
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        times
    }

    /// Integrates from `u = 0` until `t_end` or degeneration.
    pub fn run(&self) -> Result<(RunLedger, FlowState)> {
        let mut state = FlowState::initial(&self.op);
        let start = StepInfo {
            iterations: 0,
            residual: 0.0,
        };
        let mut steps = vec![self.record(&state, 0.0, start)];
        let mut snapshots = vec![Snapshot {
            t: 0.0,
            u: state.u.values.clone(),
        }];
        let outputs = self.output_times();
        let mut next_out = 0;
        // Implicit runs start small: the first backward Euler step is where
        // the local error dt²·u_tt/2 is not yet dominated by the solution's
        // own growth away from the sub-solution.
        let mut dt = match self.scheme() {
            Scheme::ExplicitRk4 => self.cfg.dt_init,
            _ => (self.cfg.dt_init / STARTUP_DIVISOR).max(self.cfg.dt_min),
        };
        let mut streak = 0;
        let eps_t = 1e-13;
        let reason = loop {
            if state.t >= self.cfg.t_end - eps_t {
                break TerminationReason::ReachedEnd;
            }
            if state.step_count >= self.cfg.max_steps {
                break TerminationReason::MaxSteps;
            }
            while next_out < outputs.len() && outputs[next_out] <= state.t + eps_t {
                next_out += 1;
            }
            let target = outputs.get(next_out).copied().unwrap_or(self.cfg.t_end);
            let clipped = target - state.t <= dt * (1.0 + 1e-9);
            let h = if clipped { target - state.t } else { dt };
            let change = |next: &FlowState| {
                let lc = |a: &[f64], b: &[f64]| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| (x / y).ln().abs())
                        .fold(0.0, f64::max)
                };
                lc(&next.g.p.values, &state.g.p.values).max(lc(&next.g.q.values, &state.g.q.values))
            };
            let attempt = self
                .step(&state, h)?
                .map(|(next, it)| (change(&next), next, it))
                .filter(|(c, _, _)| *c <= self.cfg.max_log_change);
            match attempt {
                Some((c, mut next, info)) => {
                    if clipped {
                        next.t = target;
                    }
                    let rec = self.record(&next, h, info);
                    let margin = rec.margin;
                    let drift = next.phi_residual;
                    steps.push(rec);
                    state = next;
                    if clipped {
                        snapshots.push(Snapshot {
                            t: state.t,
                            u: state.u.values.clone(),
                        });
                    } else {
                        streak += 1;
                        if streak >= 3 && dt < self.cfg.dt_init && c < 0.5 * self.cfg.max_log_change
                        {
                            dt = (2.0 * dt).min(self.cfg.dt_init);
                            streak = 0;
                        }
                    }
                    if margin < self.cfg.positivity_floor {
                        state.degenerate = true;
                        break TerminationReason::PositivityFloor;
                    }
                    if drift > VOLUME_DRIFT_LIMIT {
                        break TerminationReason::VolumeDrift;
                    }
                }
                None => {
                    streak = 0;
                    dt = h / 2.0;
                    if dt < self.cfg.dt_min {
                        state.degenerate = true;
                        break TerminationReason::NewtonFailure;
                    }
                }
            }
        };
        let ledger = RunLedger {
            scenario: self.scenario.spec().clone(),
            scenario_hash: self.scenario.hash(),
            config: self.cfg.clone(),
            steps,
            snapshots,
            terminal: Snapshot {
                t: state.t,
                u: state.u.values.clone(),
            },
            termination: Termination {
                reason,
                t_theory: self.scenario.singular_time(),
                t_numeric: reason.is_degenerate().then_some(state.t),
            },
        };
        Ok((ledger, state))
    }
}

/// Times approaching `T` at which terminal diagnostics are sampled.
pub fn probe_times(t_sing: f64) -> Vec<f64> {
    [0.2, 0.1, 0.05, 0.02]
        .iter()
        .map(|d| t_sing - d)
        .filter(|&t| t > 0.0)
        .collect()
}

/// Builds the scenario, integrates it, and returns the ledger and final state.
pub fn run_flow(scenario: &Scenario, cfg: &FlowConfig) -> Result<(RunLedger, FlowState)> {
    Integrator::new(scenario, cfg.clone())?.run()
}

/// Reconstructs the state stored in a snapshot of `ledger`.
pub fn state_at(op: &FlowOperator, snap: &Snapshot) -> Result<FlowState> {
    FlowState::from_potential(op, snap.t, snap.u.clone())
}
