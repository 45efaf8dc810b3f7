use ebake_core::adversary::{self, Outcome, Scheme};

fn report(name: &str, scheme: Scheme) -> adversary::AttackReport {
    let r = adversary::run(name, scheme, 7).expect("known attack");
    println!("{}", serde_json::to_string_pretty(&r).unwrap());
    r
}

#[test]
fn trace_links_das_only() {
    let das = report("trace", Scheme::Das);
    assert_eq!(das.outcome, Outcome::Success);
    assert_eq!(das.evidence.recovered_ids.len(), 2);
    let eb = report("trace", Scheme::Ebake);
    assert_eq!(eb.outcome, Outcome::Failure);
    assert!(eb.evidence.recovered_ids.is_empty());
}

#[test]
fn impersonation() {
    let das = report("impersonate", Scheme::Das);
    assert_eq!(das.outcome, Outcome::Success);
    let eb = report("impersonate", Scheme::Ebake);
    assert_eq!(eb.outcome, Outcome::Failure);
    assert!(eb.evidence.verdicts.iter().all(|v| !v.accepted));
}

#[test]
fn man_in_the_middle() {
    let das = report("mitm", Scheme::Das);
    assert_eq!(das.outcome, Outcome::Success);
    assert!(!das.evidence.divergent_keys.is_empty());
    let eb = report("mitm", Scheme::Ebake);
    assert_eq!(eb.outcome, Outcome::Failure);
    let control = &eb.evidence.verdicts[0];
    assert!(control.accepted, "pass-through must complete");
    assert!(eb.evidence.verdicts[1..].iter().all(|v| !v.accepted));
}

#[test]
fn flooding() {
    let das = report("dos", Scheme::Das);
    assert_eq!(das.outcome, Outcome::Success);
    assert_eq!(das.evidence.processed, Some(100));
    let eb = report("dos", Scheme::Ebake);
    assert_eq!(eb.outcome, Outcome::Failure);
    assert_eq!(eb.evidence.processed, Some(3));
    assert_eq!(eb.evidence.refused, Some(97));
}

#[test]
fn zero_flood_is_trivial() {
    for s in [Scheme::Das, Scheme::Ebake] {
        let r = adversary::dos_flood(s, 0, 1);
        assert_eq!(r.outcome, Outcome::Failure);
        assert!(r.evidence.processed.is_none());
    }
}

#[test]
fn unknown_attack_is_an_error() {
    assert!(adversary::run("teleport", Scheme::Das, 1).is_err());
}

#[test]
fn ta_cannot_be_corrupted() {
    assert!(adversary::corrupt_ta().is_err());
}
