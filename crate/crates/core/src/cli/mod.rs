//! Configuration, run persistence and report drivers behind the
//! `kahler-lab` binary. Every subcommand is also callable as a function.
//!
//! Exit codes: 0 when every enabled check passes, 1 when a check fails,
//! 2 on invalid input or I/O errors.
//!
//! CSV files hold `t,rho,value` triples, one row per node and time.

mod config;
pub mod plot;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    FlowSection, GridSection, OutputSection, RunConfig, ScenarioSection, DEFAULT_OUT, OUT_ENV,
};
use plot::{line_plot, Series};

use crate::ansatz::Scenario;
use crate::certificates::{certify, CertificateReport, Check};
use crate::error::{LabError, Result};
use crate::flow::{
    gauge_comparison, random_gauge, run_flow, FlowOperator, GaugeReport, RunLedger,
    TerminationReason,
};
use crate::picard::{
    classify_contraction, format_rational, intersect, parse_rational, ContractionInfo,
    DivisorClass, SurfaceKind, SurfaceModel,
};
use crate::singularity::{analyze, det_profile, SingularityReport, DEFAULT_FIT_WINDOW};

/// Largest metric defect accepted by the gauge sweep.
pub const GAUGE_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "kahler-lab",
    version,
    about = "Kähler-Ricci flow laboratory on model surfaces"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Nef threshold, singular time and contraction type of an ample class.
    Nef(NefArgs),
    /// Integrate the flow and write the run directory.
    Flow(FlowArgs),
    /// Evaluate bound certificates on a stored ledger.
    Certify(CertifyArgs),
    /// Terminal-time analysis of a stored ledger.
    Singularity(SingularityArgs),
    /// Run many configurations in parallel.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct NefArgs {
    #[arg(long)]
    pub surface: String,
    /// Comma-separated rational coefficients, e.g. `4,-1` or `7/2,-1`.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub ample: Vec<String>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args, Default)]
pub struct FlowArgs {
    /// Run configuration (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub surface: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub ample: Option<Vec<String>>,
    /// Grid size N.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Truncation half-width R.
    #[arg(long)]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Output root (overrides the config and the environment).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    pub ledger: PathBuf,
    /// Comma-separated checks; defaults to every non-rerunning check.
    #[arg(long, value_delimiter = ',')]
    pub checks: Option<Vec<String>>,
    /// Ledger of the same scenario on a refined grid.
    #[arg(long)]
    pub companion: Option<PathBuf>,
    /// Where to write the report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SingularityArgs {
    pub ledger: PathBuf,
    /// Decay-fit window `a,b` on the ρ axis.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    pub window: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub rho_cut: f64,
    /// Directory for the report, CSV and plots; next to the ledger by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Configurations to run; the default configuration when empty.
    pub configs: Vec<PathBuf>,
    /// Run every configuration at each of these grid sizes.
    #[arg(long, value_delimiter = ',')]
    pub nodes: Option<Vec<usize>>,
    /// Instead of flows, compare this many random gauges (seeded by the config).
    #[arg(long)]
    pub gauges: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` and runs the subcommand; returns the process exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Runs one subcommand; `Ok(pass)` reports whether every check passed.
pub fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Nef(a) => {
            let rep = nef_report(&a.surface, &a.ample)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&rep)?);
            } else {
                print!("{}", rep.table());
            }
            Ok(true)
        }
        Command::Flow(a) => {
            let mut cfg = match &a.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = a.surface {
                cfg.scenario.surface = s;
            }
            if let Some(v) = a.ample {
                cfg.scenario.ample = v;
            }
            if let Some(n) = a.nodes {
                cfg.grid.nodes = n;
            }
            if let Some(r) = a.half_width {
                cfg.grid.half_width = r;
            }
            if a.t_end.is_some() {
                cfg.flow.t_end = a.t_end;
            }
            if a.out.is_some() {
                cfg.outputs.dir = a.out;
            }
            let out = execute_flow(&cfg)?;
            println!("run directory     {}", out.dir.display());
            print!("{}", out.summary());
            Ok(out.report.all_pass())
        }
        Command::Certify(a) => {
            let checks = match &a.checks {
                Some(names) => parse_checks(names)?,
                None => Check::DEFAULT.to_vec(),
            };
            let ledger = load_ledger(&a.ledger)?;
            let companion = a.companion.as_deref().map(load_ledger).transpose()?;
            let rep = certify(&ledger, &checks, companion.as_ref())?;
            let path = a
                .out
                .unwrap_or_else(|| sibling(&a.ledger, "certificates.json"));
            write(&path, &serde_json::to_string_pretty(&rep)?)?;
            print!("{}", rep.summary_table());
            Ok(rep.all_pass())
        }
        Command::Singularity(a) => {
            let window = match a.window.as_deref() {
                None => DEFAULT_FIT_WINDOW,
                Some([x, y]) => (*x, *y),
                Some(_) => return Err(LabError::Config("--window takes two numbers a,b".into())),
            };
            let ledger = load_ledger(&a.ledger)?;
            let dir = a
                .out
                .unwrap_or_else(|| a.ledger.parent().map(Path::to_path_buf).unwrap_or_default());
            let rep = execute_singularity(&ledger, window, a.rho_cut, Some(&dir))?;
            print!("{}", rep.summary());
            Ok(rep.pass())
        }
        Command::Sweep(a) => {
            let mut base = if a.configs.is_empty() {
                vec![RunConfig::default()]
            } else {
                a.configs
                    .iter()
                    .map(|p| RunConfig::load(p))
                    .collect::<Result<Vec<_>>>()?
            };
            if let Some(out) = &a.out {
                for c in &mut base {
                    c.outputs.dir = Some(out.clone());
                }
            }
            if let Some(n) = a.gauges {
                let rows = gauge_sweep(&base[0], n, a.workers)?;
                let root = base[0].out_root();
                write(
                    &root.join("gauge-sweep.json"),
                    &serde_json::to_string_pretty(&rows)?,
                )?;
                for r in &rows {
                    println!(
                        "gauge {:<60} metric {:.3e} potential {:.3e}",
                        serde_json::to_string(&r.gauge.terms)?,
                        r.metric_sup(),
                        r.potential_defect
                    );
                }
                return Ok(rows.iter().all(|r| r.metric_sup() <= GAUGE_TOL));
            }
            let configs = match &a.nodes {
                Some(ns) => base
                    .iter()
                    .flat_map(|c| {
                        ns.iter().map(move |&n| {
                            let mut c = c.clone();
                            c.grid.nodes = n;
                            c
                        })
                    })
                    .collect(),
                None => base,
            };
            let rows = execute_sweep(&configs, a.workers)?;
            print!("{}", sweep_table(&rows));
            Ok(rows.iter().all(|r| r.pass))
        }
    }
}

fn parse_checks(names: &[String]) -> Result<Vec<Check>> {
    names
        .iter()
        .map(|n| {
            serde_json::from_value(serde_json::Value::String(n.trim().to_string()))
                .map_err(|_| LabError::Config(format!("unknown check {n:?}")))
        })
        .collect()
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent()
        .map_or_else(|| PathBuf::from(name), |p| p.join(name))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn load_ledger(path: &Path) -> Result<RunLedger> {
    RunLedger::from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NefReport {
    pub surface: String,
    pub ample: DivisorClass,
    /// `A·C` for each Mori generator, then `A²`.
    pub pairings: BTreeMap<String, String>,
    pub contraction: ContractionInfo,
}

impl NefReport {
    pub fn table(&self) -> String {
        let c = &self.contraction;
        let mut s = String::new();
        let _ = writeln!(s, "surface           {}", self.surface);
        let _ = writeln!(s, "ample class A     {}", self.ample);
        for (k, v) in &self.pairings {
            let _ = writeln!(s, "  {k:<15} {v}");
        }
        let _ = writeln!(
            s,
            "nef threshold r   {}",
            c.nef_threshold
                .as_ref()
                .map_or("inf".into(), format_rational)
        );
        let _ = writeln!(s, "singular time T   {:.6}", c.singular_time);
        let _ = writeln!(
            s,
            "L = A + rK        {}",
            c.semiample_class
                .as_ref()
                .map_or("-".into(), |l| l.to_string())
        );
        let _ = writeln!(s, "contraction       {}", c.kind);
        let _ = writeln!(
            s,
            "contracted ray    {}",
            match (&c.contracted_label, &c.contracted_ray) {
                (Some(l), Some(r)) => format!("{l} = {r}"),
                _ => "-".into(),
            }
        );
        for e in &c.discrepancies {
            let _ = writeln!(
                s,
                "discrepancy {:<5} {}",
                e.label,
                format_rational(&e.discrepancy)
            );
        }
        s
    }
}

/// The `nef` subcommand as a function.
pub fn nef_report(surface: &str, ample: &[String]) -> Result<NefReport> {
    let kind: SurfaceKind = surface.parse()?;
    let model = SurfaceModel::new(kind)?;
    let coeffs = ample
        .iter()
        .map(|s| parse_rational(s).map_err(LabError::Config))
        .collect::<Result<Vec<_>>>()?;
    let a = DivisorClass::new(coeffs);
    let contraction = classify_contraction(&a, &model)?;
    let mut pairings = BTreeMap::new();
    for c in &model.curve_basis {
        pairings.insert(
            format!("A·{}", c.label),
            format_rational(&intersect(&a, &c.class, &model)?),
        );
    }
    pairings.insert("A²".into(), format_rational(&intersect(&a, &a, &model)?));
    Ok(NefReport {
        surface: model.name(),
        ample: a,
        pairings,
        contraction,
    })
}

/// What `flow` leaves behind.
#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub dir: PathBuf,
    pub ledger: RunLedger,
    pub report: CertificateReport,
}

impl FlowOutcome {
    pub fn summary(&self) -> String {
        let l = &self.ledger;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario          {} A = {}",
            l.scenario.surface, l.scenario.ample
        );
        let _ = writeln!(
            s,
            "termination       {:?} at t = {:.6}",
            l.termination.reason, l.terminal.t
        );
        let _ = writeln!(
            s,
            "T theory/numeric  {:.6} / {}",
            l.termination.t_theory,
            l.t_numeric().map_or("-".into(), |t| format!("{t:.6}"))
        );
        let _ = writeln!(s, "accepted steps    {}", l.steps.len());
        s.push_str(&self.report.summary_table());
        s
    }
}

/// The `flow` subcommand as a function: integrate, certify, write artifacts.
pub fn execute_flow(cfg: &RunConfig) -> Result<FlowOutcome> {
    let spec = cfg.scenario_spec()?;
    let scenario = spec.build()?;
    let flow_cfg = cfg.flow_config(scenario.singular_time());
    let (ledger, _) = run_flow(&scenario, &flow_cfg)?;
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    write(&dir.join("config.toml"), &cfg.to_toml()?)?;
    write(&dir.join("ledger.json"), &ledger.to_json()?)?;
    let report = if ledger.steps.is_empty() {
        CertificateReport {
            scenario_hash: ledger.scenario_hash.clone(),
            records: vec![],
        }
    } else {
        certify(&ledger, &cfg.checks, None)?
    };
    write(
        &dir.join("certificates.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    let op = FlowOperator::new(&scenario);
    if cfg.outputs.csv {
        write(
            &dir.join("u.csv"),
            &profiles_csv(&scenario, &ledger, |s| s.u.clone()),
        )?;
        write(
            &dir.join("logdet.csv"),
            &profiles_csv(&scenario, &ledger, |s| {
                det_profile(&op, s).iter().map(|d| d.ln()).collect()
            }),
        )?;
        write(&dir.join("steps.csv"), &steps_csv(&ledger))?;
    }
    if cfg.outputs.plots {
        let rho = scenario.grid().rho();
        let pick = plotted_snapshots(&ledger);
        let curves = |f: &dyn Fn(&crate::flow::Snapshot) -> Vec<f64>| -> Vec<Series> {
            pick.iter()
                .map(|s| {
                    Series::new(
                        format!("t = {:.4}", s.t),
                        rho.iter().copied().zip(f(s)).collect(),
                    )
                })
                .collect()
        };
        write(
            &dir.join("u.svg"),
            &line_plot("potential u", "ρ", "u", &curves(&|s| s.u.clone())),
        )?;
        write(
            &dir.join("logdet.svg"),
            &line_plot(
                "log det(g/g₀)",
                "ρ",
                "log det",
                &curves(&|s| det_profile(&op, s).iter().map(|d| d.ln()).collect()),
            ),
        )?;
        let ext = |name: &str, f: &dyn Fn(&crate::flow::StepRecord) -> f64| {
            Series::new(name, ledger.steps.iter().map(|s| (s.t, f(s))).collect())
        };
        write(
            &dir.join("extremes.svg"),
            &line_plot(
                "extremes over time",
                "t",
                "value",
                &[
                    ext("min u", &|s| s.u.min),
                    ext("max u", &|s| s.u.max),
                    ext("min v", &|s| s.v.min),
                    ext("max v", &|s| s.v.max),
                ],
            ),
        )?;
    }
    Ok(FlowOutcome {
        dir,
        ledger,
        report,
    })
}

fn plotted_snapshots(ledger: &RunLedger) -> Vec<&crate::flow::Snapshot> {
    let n = ledger.snapshots.len();
    let stride = n.div_ceil(8).max(1);
    let mut v: Vec<_> = ledger.snapshots.iter().step_by(stride).collect();
    if let Some(last) = ledger.snapshots.last() {
        if v.last().map_or(true, |s| s.t != last.t) {
            v.push(last);
        }
    }
    v
}

fn profiles_csv(
    scenario: &Scenario,
    ledger: &RunLedger,
    f: impl Fn(&crate::flow::Snapshot) -> Vec<f64>,
) -> String {
    let rho = scenario.grid().rho();
    let mut s = String::from("t,rho,value\n");
    for snap in &ledger.snapshots {
        for (r, v) in rho.iter().zip(f(snap)) {
            let _ = writeln!(s, "{},{},{}", snap.t, r, v);
        }
    }
    s
}

fn steps_csv(ledger: &RunLedger) -> String {
    let mut s = String::from(
        "t,dt,iterations,u_min,u_max,v_min,v_max,det_min,det_max,margin,volume_residual\n",
    );
    for r in &ledger.steps {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.dt,
            r.iterations,
            r.u.min,
            r.u.max,
            r.v.min,
            r.v.max,
            r.det.min,
            r.det.max,
            r.margin,
            r.volume_residual
        );
    }
    s
}

/// The `singularity` subcommand as a function; writes `singularity.json`,
/// `terminal-logdet.csv` and plots into `out` when given.
pub fn execute_singularity(
    ledger: &RunLedger,
    window: (f64, f64),
    rho_cut: f64,
    out: Option<&Path>,
) -> Result<SingularityReport> {
    let rep = analyze(ledger, window, rho_cut)?;
    let Some(dir) = out else {
        return Ok(rep);
    };
    write(
        &dir.join("singularity.json"),
        &serde_json::to_string_pretty(&rep)?,
    )?;
    let scenario = ledger.scenario.build()?;
    let op = FlowOperator::new(&scenario);
    let rho = scenario.grid().rho();
    let logdet: Vec<f64> = det_profile(&op, &ledger.terminal)
        .iter()
        .map(|d| d.ln())
        .collect();
    let mut csv = String::from("t,rho,value\n");
    for (r, v) in rho.iter().zip(&logdet) {
        let _ = writeln!(csv, "{},{},{}", ledger.terminal.t, r, v);
    }
    write(&dir.join("terminal-logdet.csv"), &csv)?;
    let mut series = vec![Series::new(
        format!("log det at t = {:.6}", ledger.terminal.t),
        rho.iter().copied().zip(logdet.iter().copied()).collect(),
    )];
    if let Ok(fit) = &rep.decay {
        let (a, b) = fit.window;
        series.push(Series::new(
            format!("fit slope {:.3}", fit.slope),
            vec![
                (a, fit.intercept + fit.slope * a),
                (b, fit.intercept + fit.slope * b),
            ],
        ));
        series.push(Series::new(
            format!("predicted slope {:.1}", fit.predicted_exponent),
            vec![
                (
                    a,
                    fit.intercept + fit.slope * b - fit.predicted_exponent * (b - a),
                ),
                (b, fit.intercept + fit.slope * b),
            ],
        ));
    }
    write(
        &dir.join("decay-fit.svg"),
        &line_plot("terminal determinant", "ρ", "log det(g/g₀)", &series),
    )?;
    Ok(rep)
}

/// One row of a flow sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config_hash: String,
    pub surface: String,
    pub ample: Vec<String>,
    pub nodes: usize,
    pub termination: TerminationReason,
    pub t_numeric: Option<f64>,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub t_theory: f64,
    pub pass: bool,
    pub dir: PathBuf,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| LabError::Config(e.to_string()))
}

/// Runs every configuration on at most `workers` threads.
pub fn execute_sweep(configs: &[RunConfig], workers: usize) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    pool(workers)?.install(|| {
        configs
            .par_iter()
            .map(|c| {
                let out = execute_flow(c)?;
                Ok(SweepRow {
                    config_hash: c.hash(),
                    surface: c.scenario.surface.clone(),
                    ample: c.scenario.ample.clone(),
                    nodes: c.grid.nodes,
                    termination: out.ledger.termination.reason,
                    t_numeric: out.ledger.t_numeric(),
                    t_theory: out.ledger.termination.t_theory,
                    pass: out.report.all_pass(),
                    dir: out.dir,
                })
            })
            .collect()
    })
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:<18} {:<8} {:<12} {:>6} {:<16} {:>10} {:>10} {}\n",
        "config", "surface", "ample", "N", "termination", "T_num", "T", "checks"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<18} {:<8} {:<12} {:>6} {:<16} {:>10} {:>10.6} {}",
            r.config_hash,
            r.surface,
            r.ample.join(","),
            r.nodes,
            format!("{:?}", r.termination),
            r.t_numeric.map_or("-".into(), |t| format!("{t:.6}")),
            r.t_theory,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    s
}

/// Compares `count` random gauges drawn from the config seed at `t = T/2`
/// (or `t = 0.5` without a singularity).
pub fn gauge_sweep(cfg: &RunConfig, count: usize, workers: usize) -> Result<Vec<GaugeReport>> {
    use rayon::prelude::*;
    let spec = cfg.scenario_spec()?;
    let scenario = spec.build()?;
    let t_sing = scenario.singular_time();
    let t = if t_sing.is_finite() {
        0.5 * t_sing
    } else {
        0.5
    };
    let flow_cfg = cfg.flow_config(t_sing);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gauges: Vec<_> = (0..count).map(|_| random_gauge(&mut rng)).collect();
    pool(workers)?.install(|| {
        gauges
            .par_iter()
            .map(|g| gauge_comparison(&spec, g, &flow_cfg, t))
            .collect()
    })
}
