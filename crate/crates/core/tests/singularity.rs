mod common;

use common::*;
use kahler_lab::flow::{FlowOperator, Snapshot};
use kahler_lab::singularity::{
    analyze, contracted_pairing, det_profile, fit_decay, locate_s0, probe_pushforward, Locus,
    SingularityReport, DEFAULT_FIT_WINDOW,
};

#[test]
fn divisorial_degenerates_at_the_exceptional_end() {
    let run = full_run(&DIVISORIAL, 2048);
    let op = FlowOperator::new(&run.0);
    let s0 = locate_s0(&op, &run.1.terminal, None);
    assert_eq!(s0.locus, Locus::NearLowerEnd);
    assert!(!s0.nodes.is_empty() && s0.nodes[0] == 0);
    // S₀ ⊆ S: every flagged node also fails two-sided metric equivalence.
    assert!(s0.inside_singular_set);
}

#[test]
fn fiber_degenerates_everywhere() {
    let run = full_run(&FIBER, 2048);
    let rep = analyze(&run.1, DEFAULT_FIT_WINDOW, 0.0).unwrap();
    assert_eq!(rep.s0.locus, Locus::Everywhere);
    assert!(rep.pushforward.is_err() && rep.decay.is_err());
    let fc = rep.fiber.as_ref().unwrap();
    assert!(fc.pass && fc.ratio <= 0.05, "{fc:?}");
    assert!(rep.contracted.as_ref().unwrap().pass);
    assert!(rep.pass());
}

#[test]
fn no_decay_at_half_time() {
    let run = full_run(&DIVISORIAL, 2048);
    let op = FlowOperator::new(&run.0);
    let snap = run.1.snapshot_near(run.0.singular_time() / 2.0).unwrap();
    let fit = fit_decay(&run.0, &op, snap, DEFAULT_FIT_WINDOW).unwrap();
    assert!(fit.slope.abs() <= 0.1, "{}", fit.slope);
    assert_eq!(locate_s0(&op, snap, None).locus, Locus::Empty);
}

#[test]
fn determinant_ratio_starts_at_one() {
    let run = full_run(&DIVISORIAL, 1024);
    let op = FlowOperator::new(&run.0);
    let d = det_profile(
        &op,
        &Snapshot {
            t: 0.0,
            u: vec![0.0; 1024],
        },
    );
    assert!(d.iter().all(|&x| x == 1.0));
}

#[test]
fn pushforward_is_bounded_and_resolution_stable() {
    let (a, b) = (full_run(&DIVISORIAL, 1024), full_run(&DIVISORIAL, 2048));
    let pa = probe_pushforward(&a.0, &a.1, 0.0).unwrap();
    let pb = probe_pushforward(&b.0, &b.1, 0.0).unwrap();
    assert!(pa.pass && pb.pass);
    assert_eq!(pb.samples.len(), 4);
    assert!(pb.b0 > 0.0 && pb.b1.is_finite());
    assert!(pa.drift(&pb) <= 0.1, "drift {}", pa.drift(&pb));
}

#[test]
fn contracted_pairing_vanishes_and_the_other_tracks_the_class() {
    for ample in [DIVISORIAL, FIBER] {
        let run = full_run(&ample, 2048);
        let c = contracted_pairing(&run.0, &run.1).unwrap();
        assert!(c.terminal <= 1e-2 && c.monotone, "{c:?}");
        assert!((c.other_terminal - c.other_expected).abs() <= 1e-2, "{c:?}");
    }
}

#[test]
fn decay_slope_is_resolution_stable() {
    let slope = |n: usize| {
        let run = full_run(&DIVISORIAL, n);
        let op = FlowOperator::new(&run.0);
        fit_decay(&run.0, &op, &run.1.terminal, DEFAULT_FIT_WINDOW).unwrap()
    };
    let (a, b) = (slope(2048), slope(4096));
    assert!(a.residual <= 0.05 && b.residual <= 0.05);
    assert!(
        (a.slope - b.slope).abs() <= 0.05,
        "{} vs {}",
        a.slope,
        b.slope
    );
}

#[test]
fn report_round_trips() {
    let run = full_run(&DIVISORIAL, 1024);
    let rep = analyze(&run.1, DEFAULT_FIT_WINDOW, 0.0).unwrap();
    let back: SingularityReport =
        serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
    assert_eq!(back, rep);
}
