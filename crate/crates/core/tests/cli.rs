use std::fs;
use std::path::Path;

use kahler_lab::certificates::CertificateReport;
use kahler_lab::cli::{
    execute_flow, execute_sweep, main_from_args, nef_report, NefReport, RunConfig, OUT_ENV,
};
use kahler_lab::flow::RunLedger;
use kahler_lab::singularity::{Locus, SingularityReport};

fn run(args: &[&str]) -> i32 {
    main_from_args(std::iter::once("kahler-lab").chain(args.iter().copied()))
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn only_run_dir(root: &Path) -> std::path::PathBuf {
    let dirs: Vec<_> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

const TORUS: &str = "[scenario]\nsurface = \"T2\"\nample = [\"1\"]\n[grid]\nR = 8.0\nN = 64\n";
const FIBER: &str = "[scenario]\nsurface = \"F1\"\nample = [\"2\", \"-1\"]\n[grid]\nN = 512\n";

#[test]
fn nef_examples() {
    let r = nef_report("F1", &["4".into(), "-1".into()]).unwrap();
    assert_eq!(r.contraction.nef_threshold.unwrap(), 1.into());
    assert_eq!(r.contraction.kind.to_string(), "divisorial");
    let r = nef_report("F1", &["2".into(), "-1".into()]).unwrap();
    assert_eq!(
        kahler_lab::picard::format_rational(&r.contraction.nef_threshold.unwrap()),
        "1/2"
    );
    assert!((r.contraction.singular_time - 1.5f64.ln()).abs() < 1e-15);
    assert_eq!(r.contraction.kind.to_string(), "fiber_type");
    let r = nef_report("T2", &["1".into()]).unwrap();
    assert!(r.contraction.nef_threshold.is_none());
    assert_eq!(r.contraction.kind.to_string(), "none_needed");
    let back: NefReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);

    assert_eq!(run(&["nef", "--surface", "F1", "--ample", "4,-1"]), 0);
    assert_eq!(run(&["nef", "--surface", "F1", "--ample", "1,1"]), 2);
    assert_eq!(run(&["nef", "--surface", "K3", "--ample", "1"]), 2);
    assert_eq!(run(&["nef", "--surface", "F1"]), 2);
}

#[test]
fn torus_flow_certify_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "torus.toml", TORUS);
    let out = tmp.path().join("runs");
    assert_eq!(
        run(&["flow", "--config", &cfg, "--out", out.to_str().unwrap()]),
        0
    );
    let dir = only_run_dir(&out);
    for f in [
        "config.toml",
        "ledger.json",
        "certificates.json",
        "u.csv",
        "logdet.csv",
        "steps.csv",
        "u.svg",
        "logdet.svg",
        "extremes.svg",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let text = fs::read_to_string(dir.join("ledger.json")).unwrap();
    let ledger = RunLedger::from_json(&text).unwrap();
    assert_eq!(ledger.to_json().unwrap(), text);
    assert!((ledger.terminal.t - 5.0).abs() < 1e-12);
    let rep: CertificateReport =
        serde_json::from_str(&fs::read_to_string(dir.join("certificates.json")).unwrap()).unwrap();
    assert!(rep.all_pass());
    let cfg_back = RunConfig::load(&dir.join("config.toml")).unwrap();
    assert_eq!(
        dir.file_name().unwrap().to_str().unwrap(),
        format!("run-{}", cfg_back.hash())
    );

    let csv = fs::read_to_string(dir.join("u.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,rho,value"));
    assert_eq!(csv.lines().count(), 1 + 64 * ledger.snapshots.len());

    let ledger_path = dir.join("ledger.json");
    let report = tmp.path().join("report.json");
    assert_eq!(
        run(&[
            "certify",
            ledger_path.to_str().unwrap(),
            "--checks",
            "sandwich,v-upper,v-lower",
            "--out",
            report.to_str().unwrap()
        ]),
        0
    );
    let rep: CertificateReport =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep.records.len(), 3);
    assert!(rep.all_pass());

    let truncated = tmp.path().join("truncated.json");
    fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    assert_eq!(run(&["certify", truncated.to_str().unwrap()]), 2);
    assert_eq!(
        run(&["certify", tmp.path().join("absent.json").to_str().unwrap()]),
        2
    );
    assert_eq!(
        run(&[
            "certify",
            ledger_path.to_str().unwrap(),
            "--checks",
            "bogus"
        ]),
        2
    );
}

#[test]
fn identical_configs_give_identical_ledgers() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::parse(FIBER).unwrap();
    cfg.flow.t_end = Some(0.2);
    cfg.outputs.plots = false;
    let mut texts = vec![];
    for root in ["a", "b"] {
        cfg.outputs.dir = Some(tmp.path().join(root));
        let out = execute_flow(&cfg).unwrap();
        texts.push(fs::read(out.dir.join("ledger.json")).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn fiber_singularity_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "fiber.toml", FIBER);
    let out = tmp.path().join("runs");
    assert_eq!(
        run(&["flow", "--config", &cfg, "--out", out.to_str().unwrap()]),
        0
    );
    let ledger = only_run_dir(&out).join("ledger.json");
    let rep_dir = tmp.path().join("sing");
    assert_eq!(
        run(&[
            "singularity",
            ledger.to_str().unwrap(),
            "--out",
            rep_dir.to_str().unwrap()
        ]),
        0
    );
    let rep: SingularityReport =
        serde_json::from_str(&fs::read_to_string(rep_dir.join("singularity.json")).unwrap())
            .unwrap();
    assert_eq!(rep.s0.locus, Locus::Everywhere);
    assert!(rep.pushforward.is_err());
    assert!(
        rep_dir.join("terminal-logdet.csv").is_file() && rep_dir.join("decay-fit.svg").is_file()
    );
    assert_eq!(
        run(&["singularity", ledger.to_str().unwrap(), "--window", "-12"]),
        2
    );
}

#[test]
fn invalid_configs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let small = write_config(tmp.path(), "small.toml", "[grid]\nN = 10\n");
    assert_eq!(run(&["flow", "--config", &small, "--out", out]), 2);
    let unknown = write_config(tmp.path(), "unknown.toml", "[grid]\nN = 128\nwidth = 3\n");
    assert_eq!(run(&["flow", "--config", &unknown, "--out", out]), 2);
    let json = write_config(
        tmp.path(),
        "c.json",
        r#"{"scenario": {"surface": "T2", "ample": ["1"]}, "grid": {"R": 8.0, "N": 64}, "flow": {"t_end": 0.5}}"#,
    );
    assert_eq!(run(&["flow", "--config", &json, "--out", out]), 0);
}

#[test]
fn sweep_runs_each_config_in_its_own_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let configs: Vec<RunConfig> = [64, 128, 256]
        .into_iter()
        .map(|n| {
            let mut c = RunConfig::parse(TORUS).unwrap();
            c.grid.nodes = n;
            c.flow.t_end = Some(1.0);
            c.outputs.dir = Some(tmp.path().to_path_buf());
            c.outputs.plots = false;
            c
        })
        .collect();
    let rows = execute_sweep(&configs, 2).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.pass && r.dir.is_dir()));
    let mut dirs: Vec<_> = rows.iter().map(|r| r.dir.clone()).collect();
    dirs.dedup();
    assert_eq!(dirs.len(), 3);

    let cfg = write_config(tmp.path(), "torus.toml", TORUS);
    let out = tmp.path().join("gauge");
    // Gauges need a Hirzebruch scenario.
    assert_eq!(
        run(&[
            "sweep",
            &cfg,
            "--gauges",
            "2",
            "--out",
            out.to_str().unwrap()
        ]),
        2
    );
    let div = write_config(tmp.path(), "div.toml", "seed = 3\n[grid]\nN = 256\n");
    assert_eq!(
        run(&[
            "sweep",
            &div,
            "--gauges",
            "2",
            "--workers",
            "2",
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    assert!(out.join("gauge-sweep.json").is_file());
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    std::env::set_var(OUT_ENV, tmp.path());
    let cfg = RunConfig::default();
    assert_eq!(cfg.out_root(), tmp.path());
    assert!(cfg.run_dir().starts_with(tmp.path()));
    std::env::remove_var(OUT_ENV);
}
