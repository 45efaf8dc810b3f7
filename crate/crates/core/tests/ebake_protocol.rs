use ebake_core::crypto::OpCounters;
use ebake_core::ebake::{FailureReason, ProtocolConfig, Step};
use ebake_core::network::{EbakeNetwork, Entity, HandshakeStatus};
use ebake_core::transport::DeliveryMode;
use ebake_core::DeviceId;

fn id(s: &str) -> DeviceId {
    DeviceId::from_label(s).unwrap()
}

fn net(seed: u64) -> EbakeNetwork {
    let mut n = EbakeNetwork::new(ProtocolConfig::default(), DeliveryMode::default(), seed).unwrap();
    n.add_device(id("sensor-a")).unwrap();
    n.add_device(id("sensor-b")).unwrap();
    n
}

#[test]
fn honest_handshake_agrees() {
    let mut n = net(1);
    let s = n.handshake(id("sensor-a"), id("sensor-b"));
    assert_eq!(s.status(), HandshakeStatus::Established);
    assert!(s.keys_match());
    assert_eq!(s.initiator_key.as_ref().unwrap().peer, id("sensor-b"));
    assert_eq!(s.responder_key.as_ref().unwrap().peer, id("sensor-a"));
    assert!(s.rtt_ms().unwrap() > 0);
}

#[test]
fn counts_per_role() {
    let mut n = net(2);
    let s = n.handshake(id("sensor-a"), id("sensor-b"));
    assert_eq!(s.counters.initiator, OpCounters::new(1, 2, 3, 1));
    assert_eq!(s.counters.ta, OpCounters::new(1, 0, 5, 1));
    assert_eq!(s.counters.responder, OpCounters::new(0, 2, 3, 0));
    assert_eq!(s.counters.total(), OpCounters::new(2, 4, 11, 2));
}

#[test]
fn counters_repeat_exactly() {
    let mut n = net(3);
    let a = n.handshake(id("sensor-a"), id("sensor-b")).counters;
    let b = n.handshake(id("sensor-b"), id("sensor-a")).counters;
    assert_eq!(a, b);
}

#[test]
fn zero_window_fails_first_check() {
    let cfg = ProtocolConfig {
        freshness_ms: 0,
        ..Default::default()
    };
    let mut n = EbakeNetwork::new(cfg, DeliveryMode::default(), 4).unwrap();
    n.add_device(id("a")).unwrap();
    n.add_device(id("b")).unwrap();
    let s = n.handshake(id("a"), id("b"));
    match s.status() {
        HandshakeStatus::Failed { entity, error } => {
            assert_eq!(entity, Entity::Ta);
            assert_eq!(error.step, Step::TaMsg1);
            assert_eq!(error.reason, FailureReason::StaleTimestamp);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_target_refused() {
    let mut n = net(5);
    let e = n.start(id("sensor-a"), id("nobody")).unwrap_err();
    assert_eq!(e.reason, FailureReason::UnknownDevice);
}

#[test]
fn concurrent_handshakes_get_distinct_topics() {
    let mut n = EbakeNetwork::new(ProtocolConfig::default(), DeliveryMode::default(), 6).unwrap();
    let ids: Vec<_> = (0..8).map(|i| id(&format!("dev{i}"))).collect();
    for d in &ids {
        n.add_device(*d).unwrap();
    }
    let cs: Vec<_> = (0..8).map(|i| n.start(ids[i], ids[(i + 1) % 8]).unwrap()).collect();
    n.run_until_idle();
    let mut topics = std::collections::HashSet::new();
    for c in cs {
        let s = n.session(&c).unwrap();
        assert!(s.keys_match());
        topics.insert(s.initiator_key.clone().unwrap().topic);
    }
    assert_eq!(topics.len(), 8);
}
