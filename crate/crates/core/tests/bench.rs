use ebake_core::adversary::Scheme;
use ebake_core::bench::{self, DEFAULT_ITERATIONS};
use ebake_core::crypto::OpCounters;

#[test]
fn ebake_counts_and_prediction() {
    let r = bench::run(Scheme::Ebake, DEFAULT_ITERATIONS, 50, 11);
    println!("{}", r.to_markdown());
    assert_eq!(r.total, OpCounters::new(2, 4, 11, 2));
    assert_eq!(r.formula, "2T_sym + 4T_asym + 11T_h");
    assert!(r.profile.t_asym >= r.profile.t_pm);
    assert!(r.deviation <= 0.25, "deviation {:.3}", r.deviation);
}

#[test]
fn das_counts_are_reported() {
    let r = bench::run(Scheme::Das, DEFAULT_ITERATIONS, 50, 11);
    println!("{}", r.to_markdown());
    assert_eq!(r.total.hash, 12);
    assert!(r.discrepancies.iter().any(|d| d.contains("point")));
    assert!(r.deviation <= 0.25, "deviation {:.3}", r.deviation);
}

#[test]
fn counted_runs_repeat() {
    for s in [Scheme::Ebake, Scheme::Das] {
        let a = bench::run_counted_handshake(s, 1).counters;
        let b = bench::run_counted_handshake(s, 2).counters;
        assert_eq!(a, b);
    }
}
