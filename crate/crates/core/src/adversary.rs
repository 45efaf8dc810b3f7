//! Dolev-Yao channel adversary and scripted attacks.
//!
//! The adversary sits in the broker as a [`ChannelTap`]: it sees every
//! publish, can drop or rewrite it, and can inject or replay raw bytes.
//! Attack scripts run the same steps against both schemes and return an
//! [`AttackReport`] whose outcome is decided by a machine check.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ops::Range;
use std::rc::Rc;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::codec::{decode_envelope, encode_fields, Envelope, Field, FieldTag, MsgType, WireMessage};
use crate::crypto::counters::{self, OpCounters};
use crate::crypto::{asym_encrypt, random_scalar, scalar_mult, scalar_mult_base, Digest, HybridCiphertext, Point};
use crate::das::{self, DasDeviceState, DasMsg1, DasMsg2, DasVerdict};
use crate::ebake::{topics, ExposedDeviceData, Msg1, Msg3, Msg4, ProtocolConfig, TaEvent, DEFAULT_FRESHNESS_MS};
use crate::id::{CorrelationId, DeviceId, Timestamp};
use crate::network::{das_inbox, DasNetwork, EbakeNetwork, HandshakeStatus, NetEvent};
use crate::transport::{Broker, ChannelTap, DeliveryMode, Published, TapAction, TransportError};
use crate::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Das,
    Ebake,
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "das" => Ok(Scheme::Das),
            "ebake" | "ebake-se" => Ok(Scheme::Ebake),
            other => Err(format!("unknown scheme {other:?}")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Das => "das",
            Scheme::Ebake => "ebake",
        })
    }
}

/// One message as it crossed the channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Captured {
    pub index: usize,
    pub topic: String,
    #[serde(with = "crate::hexser::vec")]
    pub raw: Vec<u8>,
    pub at: Timestamp,
    /// Put on the wire by the adversary (injection, replay or rewrite).
    pub injected: bool,
}

/// Append-only record of the wire.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Transcript {
    entries: Vec<Captured>,
}

impl Transcript {
    fn push(&mut self, msg: &Published, injected: bool) {
        self.entries.push(Captured {
            index: self.entries.len(),
            topic: msg.topic.clone(),
            raw: msg.payload.clone(),
            at: msg.at,
            injected,
        });
    }

    /// Record bytes seen out of band.
    pub fn record(&mut self, topic: &str, raw: Vec<u8>, at: Timestamp) {
        let m = Published {
            topic: topic.to_owned(),
            payload: raw,
            at,
        };
        self.push(&m, false);
    }

    pub fn entries(&self) -> &[Captured] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Captured> {
        self.entries.get(i)
    }

    /// Entries whose envelope carries `t`.
    pub fn of_type(&self, t: MsgType) -> impl Iterator<Item = &Captured> {
        self.entries.iter().filter(move |e| e.raw.first() == Some(&(t as u8)))
    }
}

/// Rewrite rule. The first rule returning `Some` decides the message's fate.
pub type Rule = Box<dyn FnMut(&Published, &Transcript) -> Option<TapAction>>;

/// The adversary's seat on the channel.
#[derive(Default)]
pub struct AdversaryTap {
    transcript: Transcript,
    rules: Vec<Rule>,
    pub dropped: usize,
    pub rewritten: usize,
}

impl AdversaryTap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn add_rule(&mut self, rule: Rule) {
        self.rules.push(rule);
    }

    pub fn clear_rules(&mut self) {
        self.rules.clear();
    }

    /// Suppress every message matching `pred`.
    pub fn drop_where(&mut self, mut pred: impl FnMut(&Published) -> bool + 'static) {
        self.add_rule(Box::new(move |m, _| pred(m).then_some(TapAction::Drop)));
    }
}

impl ChannelTap for AdversaryTap {
    fn on_publish(&mut self, msg: &Published) -> TapAction {
        self.transcript.push(msg, false);
        let transcript = &self.transcript;
        let action = self
            .rules
            .iter_mut()
            .find_map(|r| r(msg, transcript))
            .unwrap_or(TapAction::Forward);
        match &action {
            TapAction::Drop => self.dropped += 1,
            TapAction::Replace(raw) => {
                self.rewritten += 1;
                let m = Published {
                    payload: raw.clone(),
                    ..msg.clone()
                };
                self.transcript.push(&m, true);
            }
            TapAction::Forward => {}
        }
        action
    }

    fn on_inject(&mut self, msg: &Published) {
        self.transcript.push(msg, true);
    }
}

/// Send arbitrary bytes on `topic`.
pub fn inject(broker: &mut Broker<AdversaryTap>, topic: &str, raw: Vec<u8>) -> Result<(), TransportError> {
    broker.inject(topic, raw).map(|_| ())
}

/// Re-send transcript entry `index` on its original topic after `delay_ms`.
pub fn replay(broker: &mut Broker<AdversaryTap>, index: usize, delay_ms: u64) -> Result<bool, TransportError> {
    let Some(e) = broker.tap().transcript().get(index).cloned() else {
        return Ok(false);
    };
    broker.clock().advance(delay_ms);
    broker.inject(&e.topic, e.raw)?;
    Ok(true)
}

/// Decode, edit and re-encode an envelope of type `M`.
pub fn rewrite<M: WireMessage>(raw: &[u8], edit: impl FnOnce(&mut M)) -> Option<Vec<u8>> {
    let env = decode_envelope(raw).ok()?;
    let mut m: M = env.message().ok()?;
    edit(&mut m);
    Some(Envelope::wrap(&m, env.correlation, &env.sender).encode())
}

/// What a corruption query yields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extracted {
    /// Baseline devices keep everything in plain memory.
    DasTuple(DasDeviceState),
    /// SE-equipped devices give up public data only.
    EbakePublic(ExposedDeviceData),
}

impl Extracted {
    pub fn secret_count(&self) -> usize {
        match self {
            Extracted::DasTuple(_) => 2,
            Extracted::EbakePublic(_) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CorruptError {
    #[error("the trusted authority cannot be corrupted")]
    TrustedAuthority,
    #[error("no such device")]
    UnknownDevice,
}

pub fn corrupt_das_device<T: ChannelTap>(net: &DasNetwork<T>, id: &DeviceId) -> Result<Extracted, CorruptError> {
    net.device(id)
        .map(|d| Extracted::DasTuple(d.state.clone()))
        .ok_or(CorruptError::UnknownDevice)
}

pub fn corrupt_ebake_device<T: ChannelTap>(net: &EbakeNetwork<T>, id: &DeviceId) -> Result<Extracted, CorruptError> {
    net.device(id)
        .map(|d| Extracted::EbakePublic(d.exposed()))
        .ok_or(CorruptError::UnknownDevice)
}

pub fn corrupt_ta() -> Result<Extracted, CorruptError> {
    Err(CorruptError::TrustedAuthority)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

/// One forged or rewritten message and what the receiver did with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub variant: String,
    pub accepted: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub recovered_ids: Vec<String>,
    /// Sessions observed per recovered identity.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub linked_sessions: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub verdicts: Vec<Verdict>,
    /// Fingerprints of keys held by each side when they differ.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub divergent_keys: Vec<(String, String)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub processed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub refused: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub receiver_ops: Option<OpCounters>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackReport {
    pub attack: String,
    pub scheme: Scheme,
    pub outcome: Outcome,
    pub evidence: Evidence,
    pub steps: Vec<String>,
}

impl AttackReport {
    fn new(attack: &str, scheme: Scheme) -> Self {
        AttackReport {
            attack: attack.to_owned(),
            scheme,
            outcome: Outcome::Failure,
            evidence: Evidence::default(),
            steps: Vec::new(),
        }
    }

    fn step(&mut self, s: impl Into<String>) {
        self.steps.push(s.into());
    }

    pub fn succeeded(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

pub const ATTACKS: &[&str] = &["trace", "impersonate", "mitm", "dos"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown attack {0:?}; expected one of trace, impersonate, mitm, dos")]
pub struct UnknownAttack(pub String);

/// Run a named attack script with a fixed seed.
pub fn run(name: &str, scheme: Scheme, seed: u64) -> Result<AttackReport, UnknownAttack> {
    Ok(match (name, scheme) {
        ("trace" | "trace-identity", Scheme::Das) => trace_das(seed),
        ("trace" | "trace-identity", Scheme::Ebake) => trace_ebake(seed),
        ("impersonate", Scheme::Das) => impersonate_das(seed),
        ("impersonate", Scheme::Ebake) => impersonate_ebake(seed),
        ("mitm", Scheme::Das) => mitm_das(seed),
        ("mitm", Scheme::Ebake) => mitm_ebake(seed),
        ("dos" | "dos-flood", s) => dos_flood(s, 100, seed),
        _ => return Err(UnknownAttack(name.to_owned())),
    })
}

const WINDOW: u64 = DEFAULT_FRESHNESS_MS;

pub fn device_x() -> DeviceId {
    DeviceId::from_label("device-x").expect("short label")
}

pub fn device_y() -> DeviceId {
    DeviceId::from_label("device-y").expect("short label")
}

pub fn das_network(seed: u64) -> DasNetwork<AdversaryTap> {
    let mut n = DasNetwork::with_tap(WINDOW, DeliveryMode::default(), seed, AdversaryTap::new());
    n.add_device(device_x()).expect("fresh id");
    n.add_device(device_y()).expect("fresh id");
    n
}

pub fn ebake_network(seed: u64) -> EbakeNetwork<AdversaryTap> {
    let mut n = EbakeNetwork::with_tap(ProtocolConfig::default(), DeliveryMode::default(), seed, AdversaryTap::new())
        .expect("seeded setup");
    n.add_device(device_x()).expect("fresh id");
    n.add_device(device_y()).expect("fresh id");
    n
}

fn fp(d: &Digest) -> String {
    crate::ebake::fingerprint(d)
}

// ---- identity tracing -------------------------------------------------

/// Where an identity showed up in a transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityHit {
    pub id: DeviceId,
    pub index: usize,
    pub form: &'static str,
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Search every captured byte and topic for any of `ids`, in raw, hex and
/// text form.
pub fn scan_for_identities(t: &Transcript, ids: &[DeviceId]) -> Vec<IdentityHit> {
    let mut hits = Vec::new();
    for e in t.entries() {
        for id in ids {
            let hex = id.to_hex();
            let label_len = id.0.iter().rposition(|b| *b != 0).map_or(0, |p| p + 1);
            let label = &id.0[..label_len];
            let forms: [(&'static str, &[u8]); 3] = [("raw", &id.0), ("hex", hex.as_bytes()), ("label", label)];
            for (form, needle) in forms {
                if needle.len() >= 4 && (contains(&e.raw, needle) || contains(e.topic.as_bytes(), needle)) {
                    hits.push(IdentityHit {
                        id: *id,
                        index: e.index,
                        form,
                    });
                }
            }
        }
    }
    hits
}

/// Byte ranges of each payload field, as absolute offsets into `raw`.
pub fn field_spans(raw: &[u8]) -> Option<Vec<(FieldTag, Range<usize>)>> {
    let env = decode_envelope(raw).ok()?;
    let mut at = env.payload_offset() + 1;
    let mut out = Vec::new();
    while at < raw.len() {
        let tag = FieldTag::from_u8(raw[at]).ok()?;
        let len = u32::from_be_bytes(raw.get(at + 1..at + 5)?.try_into().ok()?) as usize;
        let start = at + 5;
        out.push((tag, start..start + len));
        at = start + len;
    }
    Some(out)
}

/// Absolute ranges holding hybrid-ciphertext bodies in an EBAKE envelope.
pub fn hybrid_body_ranges(raw: &[u8]) -> Vec<Range<usize>> {
    let idx = match raw.first().and_then(|t| MsgType::from_u8(*t).ok()) {
        Some(MsgType::M1) => 2,
        Some(MsgType::M2 | MsgType::M3 | MsgType::M4) => 0,
        _ => return Vec::new(),
    };
    let Some(spans) = field_spans(raw) else {
        return Vec::new();
    };
    spans
        .get(idx)
        .map(|(_, r)| {
            let b = HybridCiphertext::body_range(r.len());
            vec![r.start + b.start..r.start + b.end]
        })
        .unwrap_or_default()
}

/// Occurrences of `secret` anywhere on the wire outside hybrid-ciphertext bodies.
pub fn exposures_outside_ciphertext(entries: &[Captured], secret: &[u8]) -> usize {
    let mut n = 0;
    for e in entries {
        let bodies = hybrid_body_ranges(&e.raw);
        for (i, w) in e.raw.windows(secret.len()).enumerate() {
            if w == secret && !bodies.iter().any(|b| b.start <= i && i + secret.len() <= b.end) {
                n += 1;
            }
        }
        if contains(e.topic.as_bytes(), secret) {
            n += 1;
        }
    }
    n
}

pub fn attack_trace_identity(scheme: Scheme, t: &Transcript, registered: &[DeviceId]) -> AttackReport {
    let mut r = AttackReport::new("trace", scheme);
    if t.is_empty() {
        r.step("no data: transcript is empty");
        return r;
    }
    r.step(format!("scanning {} captured messages", t.len()));
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    // Plaintext identity fields.
    for e in t.entries() {
        let Ok(env) = decode_envelope(&e.raw) else { continue };
        let Ok(fields) = crate::codec::decode_fields(&env.payload) else { continue };
        for f in fields {
            if let Field::Id(b) = f {
                *seen.entry(hex::encode(b)).or_default() += 1;
            }
        }
    }
    // Raw byte scan for anything the field walk missed.
    for h in scan_for_identities(t, registered) {
        seen.entry(h.id.to_hex()).or_insert(1);
        r.step(format!("message {} contains identity {} ({} form)", h.index, h.id, h.form));
    }
    for (id, n) in &seen {
        r.step(format!("identity {id} seen in {n} message(s)"));
    }
    r.evidence.recovered_ids = seen.keys().cloned().collect();
    r.evidence.linked_sessions = seen;
    r.outcome = if r.evidence.recovered_ids.is_empty() {
        r.step("no identity recovered");
        Outcome::Failure
    } else {
        Outcome::Success
    };
    r
}

fn trace_das(seed: u64) -> AttackReport {
    let mut n = das_network(seed);
    for _ in 0..2 {
        n.handshake(device_x(), device_y()).expect("registered");
    }
    n.handshake(device_y(), device_x()).expect("registered");
    attack_trace_identity(Scheme::Das, n.broker().tap().transcript(), &[device_x(), device_y()])
}

fn trace_ebake(seed: u64) -> AttackReport {
    let mut n = ebake_network(seed);
    for _ in 0..2 {
        n.handshake(device_x(), device_y());
    }
    n.handshake(device_y(), device_x());
    attack_trace_identity(Scheme::Ebake, n.broker().tap().transcript(), &n.device_ids())
}

// ---- impersonation ----------------------------------------------------

fn verdict_detail(v: &DasVerdict) -> String {
    format!("fresh={} certificate={} signature={}", v.fresh, v.certificate, v.signature)
}

/// Inject `m1` into the responder's inbox and report whether it answered.
fn das_inject_m1(n: &mut DasNetwork<AdversaryTap>, m1: &DasMsg1, rng: &mut SeededRng) -> (bool, CorrelationId) {
    let mut c = [0u8; 16];
    rng.fill_bytes(&mut c);
    let c = CorrelationId(c);
    let env = Envelope::wrap(m1, c, "mallory");
    inject(n.broker_mut(), &das_inbox(&device_y()), env.encode()).expect("nonempty topic");
    let before = n.broker().tap().transcript().len();
    while n.broker().in_flight() > 0 {
        n.step();
    }
    let answered = n.broker().tap().transcript().entries()[before..]
        .iter()
        .any(|e| e.raw.first() == Some(&(MsgType::DasM2 as u8)) && e.raw[1..17] == c.0);
    (answered, c)
}

pub fn attack_impersonate_das(n: &mut DasNetwork<AdversaryTap>, stolen: &DasDeviceState, rng: &mut SeededRng) -> AttackReport {
    let mut r = AttackReport::new("impersonate", Scheme::Das);
    let Some(seen) = n.broker().tap().transcript().of_type(MsgType::DasM1).next().cloned() else {
        r.step("no first message captured");
        return r;
    };
    let old: DasMsg1 = decode_envelope(&seen.raw).and_then(|e| e.message()).expect("captured M1");
    let target = n.device(&device_y()).expect("responder").state.clone();
    r.step(format!("captured M1 of {} and extracted its stored tuple", old.id_x));

    let now = n.now();
    let r_c = random_scalar(rng).expect("seeded");
    let big_r_c = scalar_mult_base(&r_c);

    // The recipe as published: fresh (r_c, TS_c), stale z_x.
    let recipe = DasMsg1 {
        ts_x: now,
        r_x: big_r_c,
        ..old.clone()
    };
    // Same, but z recomputed from the captured Pr_x.
    let resigned = DasMsg1 {
        z_x: das::sign(stolen, &r_c, &big_r_c, now).expect("nonzero"),
        ..recipe.clone()
    };
    // No corruption at all: keep the public certificate (ID, A, c) and
    // swap in the attacker's own key pair, which nothing binds to it.
    let pr_c = random_scalar(rng).expect("seeded");
    let own = DasDeviceState {
        pr: pr_c.clone(),
        pub_key: scalar_mult_base(&pr_c),
        ..stolen.clone()
    };
    let own_keys = DasMsg1 {
        pub_x: own.pub_key,
        z_x: das::sign(&own, &r_c, &big_r_c, now).expect("nonzero"),
        ..recipe.clone()
    };
    let stale = DasMsg1 {
        ts_x: now.saturating_sub(WINDOW + 1),
        z_x: das::sign(stolen, &r_c, &big_r_c, now.saturating_sub(WINDOW + 1)).expect("nonzero"),
        ..recipe.clone()
    };

    let variants = [
        ("recipe: stale z_x with fresh R_c, TS_c", recipe),
        ("z recomputed with extracted Pr_x", resigned),
        ("own key pair under the public certificate", own_keys.clone()),
        ("z recomputed, expired TS_c", stale),
    ];
    let mut any = false;
    for (name, m) in variants {
        let v = das::das_verify_msg1(&target, &m, n.now(), WINDOW).expect("well-formed");
        let (answered, c) = das_inject_m1(n, &m, rng);
        any |= answered;
        r.step(format!("{name}: {} ({})", if answered { "accepted" } else { "rejected" }, verdict_detail(&v)));
        if answered && m.pub_x == own.pub_key {
            // The attacker can finish the key exchange from its own secrets.
            let m2: Option<DasMsg2> = n
                .broker()
                .tap()
                .transcript()
                .of_type(MsgType::DasM2)
                .filter(|e| e.raw[1..17] == c.0)
                .find_map(|e| decode_envelope(&e.raw).ok()?.message().ok());
            let held = n.device(&device_y()).and_then(|d| d.responder_key(&c));
            if let (Some(m2), Some(held)) = (m2, held) {
                let k = scalar_mult(&pr_c, &m2.pub_y);
                let b = scalar_mult(&r_c, &m2.r_y);
                let sk = das::session_key(&b, &k, m2.ts_y, m.ts_x, &m.id_x, &m2.id_y);
                r.step(format!(
                    "attacker derives responder's session key: {} (responder holds {})",
                    fp(&sk),
                    fp(&held)
                ));
            }
        }
        r.evidence.verdicts.push(Verdict {
            variant: name.to_owned(),
            accepted: answered,
            detail: verdict_detail(&v),
        });
    }
    r.outcome = if any { Outcome::Success } else { Outcome::Failure };
    r
}

fn impersonate_das(seed: u64) -> AttackReport {
    let mut n = das_network(seed);
    n.handshake(device_x(), device_y()).expect("registered");
    let Extracted::DasTuple(stolen) = corrupt_das_device(&n, &device_x()).expect("registered") else {
        unreachable!("baseline devices expose their tuple")
    };
    let mut rng = SeededRng::seed_from_u64(seed ^ 0xadd);
    attack_impersonate_das(&mut n, &stolen, &mut rng)
}

fn ta_events_since<T: ChannelTap>(n: &EbakeNetwork<T>, from: usize) -> Vec<TaEvent> {
    n.events()[from..]
        .iter()
        .filter_map(|e| match e {
            NetEvent::Ta { event, .. } => Some(event.clone()),
            _ => None,
        })
        .collect()
}

fn inject_and_drain(n: &mut EbakeNetwork<AdversaryTap>, topic: &str, raw: Vec<u8>) -> Vec<TaEvent> {
    let from = n.events().len();
    inject(n.broker_mut(), topic, raw).expect("nonempty topic");
    while n.step() {}
    ta_events_since(n, from)
}

fn describe(ev: &[TaEvent]) -> (bool, String) {
    match ev.first() {
        Some(TaEvent::Forwarded { .. }) => (true, "TA forwarded M2".into()),
        Some(TaEvent::Rejected { error, .. }) => (false, error.to_string()),
        Some(other) => (false, format!("{other:?}")),
        None => (false, "no TA reaction".into()),
    }
}

pub fn attack_impersonate_ebake(n: &mut EbakeNetwork<AdversaryTap>, exposed: &ExposedDeviceData, rng: &mut SeededRng) -> AttackReport {
    let mut r = AttackReport::new("impersonate", Scheme::Ebake);
    r.step(format!(
        "corrupting device-x yields public key and route only ({} secrets)",
        Extracted::EbakePublic(exposed.clone()).secret_count()
    ));
    let sender = topics::device_inbox(&exposed.route);
    let q_y = n.ta().public_key(&device_y()).expect("directory");
    let captured: Option<Msg1> = n
        .broker()
        .tap()
        .transcript()
        .of_type(MsgType::M1)
        .next()
        .and_then(|e| decode_envelope(&e.raw).ok()?.message().ok());
    let now = n.now();
    let mut verdicts = Vec::new();

    // Fresh forgery from public knowledge.
    let mut w = vec![0u8; captured.as_ref().map_or(100, |m| m.w.len())];
    rng.fill_bytes(&mut w);
    let mut y = [0u8; 33];
    rng.fill_bytes(&mut y);
    let mut n_c = [0u8; 16];
    rng.fill_bytes(&mut n_c);
    let z_plain = encode_fields(&[
        Field::Point(exposed.public_key.to_compressed()),
        Field::Id(device_x().0),
        Field::Bytes(n_c.to_vec()),
        Field::Timestamp(now),
    ]);
    let z = asym_encrypt(&q_y, &z_plain, rng).expect("valid key").to_bytes();
    let mut p = [0u8; 32];
    rng.fill_bytes(&mut p);
    let forged = Msg1 {
        w,
        y,
        z,
        p_dx: Digest(p),
        t1: now,
    };
    verdicts.push(("forged W without K_dta", forged.clone()));
    if let Some(m) = &captured {
        // Captured W/Y, fresh timestamp; P_dx cannot be recomputed.
        verdicts.push((
            "captured W and Y with fresh T1",
            Msg1 {
                t1: now,
                z: forged.z.clone(),
                ..m.clone()
            },
        ));
    }
    for (name, m) in verdicts {
        let mut c = [0u8; 16];
        rng.fill_bytes(&mut c);
        let env = Envelope::wrap(&m, CorrelationId(c), &sender);
        let ev = inject_and_drain(n, topics::TA_INBOX, env.encode());
        let (accepted, detail) = describe(&ev);
        r.step(format!("{name}: {}", detail));
        r.evidence.verdicts.push(Verdict {
            variant: name.to_owned(),
            accepted,
            detail,
        });
    }
    let any = r.evidence.verdicts.iter().any(|v| v.accepted);
    r.outcome = if any { Outcome::Success } else { Outcome::Failure };
    r
}

fn impersonate_ebake(seed: u64) -> AttackReport {
    let mut n = ebake_network(seed);
    n.handshake(device_x(), device_y());
    let Extracted::EbakePublic(exposed) = corrupt_ebake_device(&n, &device_x()).expect("registered") else {
        unreachable!("SE devices expose public data only")
    };
    let mut rng = SeededRng::seed_from_u64(seed ^ 0xadd);
    attack_impersonate_ebake(&mut n, &exposed, &mut rng)
}

// ---- man in the middle ------------------------------------------------

#[derive(Default)]
struct Stash {
    attacker_key: Option<Digest>,
}

/// Rule that rewrites the responder's M2 on its way to the initiator.
/// `full` also swaps Pub_y, R_y and z_y for the attacker's own values.
fn das_m2_rule(full: bool, seed: u64, stash: Rc<RefCell<Stash>>) -> Rule {
    let mut rng = SeededRng::seed_from_u64(seed);
    let to_x = das_inbox(&device_x());
    Box::new(move |m: &Published, t: &Transcript| {
        if m.topic != to_x || m.payload.first() != Some(&(MsgType::DasM2 as u8)) {
            return None;
        }
        let corr = &m.payload[1..17];
        let m1: DasMsg1 = t
            .of_type(MsgType::DasM1)
            .filter(|e| &e.raw[1..17] == corr)
            .find_map(|e| decode_envelope(&e.raw).ok()?.message().ok())?;
        let r_c = random_scalar(&mut rng).ok()?;
        let x_c = random_scalar(&mut rng).ok()?;
        let raw = rewrite::<DasMsg2>(&m.payload, |m2| {
            let b = scalar_mult(&r_c, &m1.r_x);
            let k = scalar_mult(&x_c, &m1.pub_x);
            let sk = das::session_key(&b, &k, m2.ts_y, m1.ts_x, &m1.id_x, &m2.id_y);
            if full {
                let fake = DasDeviceState {
                    id: m2.id_y,
                    pr: x_c.clone(),
                    a: m2.a_y,
                    c: m2.c_y.clone(),
                    pub_key: scalar_mult_base(&x_c),
                    params: das::DasParams {
                        curve: String::new(),
                        pub_ta: Point::generator(),
                    },
                };
                m2.r_y = scalar_mult_base(&r_c);
                m2.pub_y = fake.pub_key;
                m2.z_y = das::sign(&fake, &r_c, &m2.r_y, m2.ts_y).expect("nonzero");
            }
            m2.skv = das::skv(&sk, m2.ts_y);
            stash.borrow_mut().attacker_key = Some(sk);
        })?;
        Some(TapAction::Replace(raw))
    })
}

pub fn attack_mitm_das(seed: u64) -> AttackReport {
    let mut r = AttackReport::new("mitm", Scheme::Das);
    let mut success = false;
    for (name, full) in [
        ("replace SKV only (as published)", false),
        ("replace Pub_y, R_y, z_y and SKV", true),
    ] {
        let mut n = das_network(seed);
        let stash = Rc::new(RefCell::new(Stash::default()));
        n.broker_mut().tap_mut().add_rule(das_m2_rule(full, seed ^ 0x4d17, stash.clone()));
        let c = n.start(device_x(), device_y()).expect("registered");
        // Deliver M1 and M2 only; the responder's pending key is read before
        // M3 can clear it.
        let mut held_y = None;
        while n.step() {
            held_y = held_y.or_else(|| n.device(&device_y()).and_then(|d| d.responder_key(&c)));
        }
        let s = n.session(&c).expect("started").clone();
        let attacker = stash.borrow().attacker_key;
        let detail = match (&s.initiator_key, held_y) {
            (Some(kx), Some(ky)) => {
                let divergent = *kx != ky;
                let with_attacker = Some(*kx) == attacker;
                r.step(format!(
                    "{name}: initiator completed with {} ; responder holds {} ; attacker holds {}",
                    fp(kx),
                    fp(&ky),
                    attacker.as_ref().map(fp).unwrap_or_default()
                ));
                if divergent {
                    r.evidence.divergent_keys.push((fp(kx), fp(&ky)));
                }
                success |= divergent && with_attacker;
                format!("initiator key shared with attacker: {with_attacker}")
            }
            _ => {
                let why = s
                    .errors
                    .first()
                    .map(|(who, e)| format!("{who} rejected: {e}"))
                    .unwrap_or_else(|| "initiator did not complete".into());
                r.step(format!("{name}: {why}"));
                why
            }
        };
        r.evidence.verdicts.push(Verdict {
            variant: name.to_owned(),
            accepted: s.initiator_key.is_some(),
            detail,
        });
    }
    r.outcome = if success { Outcome::Success } else { Outcome::Failure };
    r
}

fn mitm_das(seed: u64) -> AttackReport {
    attack_mitm_das(seed)
}

type EbakeRewrite = fn(&Published, &mut SeededRng, &Point) -> Option<TapAction>;

fn is(m: &Published, t: MsgType) -> bool {
    m.payload.first() == Some(&(t as u8))
}

fn fake_zy(rng: &mut SeededRng, q_x: &Point) -> Vec<u8> {
    let mut n = [0u8; 16];
    rng.fill_bytes(&mut n);
    let pt = encode_fields(&[Field::Id(device_y().0), Field::Bytes(n.to_vec()), Field::Timestamp(0)]);
    asym_encrypt(q_x, &pt, rng).expect("valid key").to_bytes()
}

fn ebake_variants() -> Vec<(&'static str, EbakeRewrite)> {
    vec![
        ("pass-through", |_, _, _| None),
        ("swap Z_y in M4", |m, rng, q_x| {
            if !is(m, MsgType::M4) {
                return None;
            }
            let z = fake_zy(rng, q_x);
            rewrite::<Msg4>(&m.payload, |m4| m4.z_y = z).map(TapAction::Replace)
        }),
        ("swap Z_y in M3", |m, rng, q_x| {
            if !is(m, MsgType::M3) {
                return None;
            }
            let z = fake_zy(rng, q_x);
            rewrite::<Msg3>(&m.payload, |m3| m3.z_y = z).map(TapAction::Replace)
        }),
        ("replace P_dxx", |m, rng, _| {
            if !is(m, MsgType::M4) {
                return None;
            }
            let mut d = [0u8; 32];
            rng.fill_bytes(&mut d);
            rewrite::<Msg4>(&m.payload, |m4| m4.p_dxx = Digest(d)).map(TapAction::Replace)
        }),
        ("replace P_dTA", |m, rng, _| {
            if !is(m, MsgType::M3) {
                return None;
            }
            let mut d = [0u8; 32];
            rng.fill_bytes(&mut d);
            rewrite::<Msg3>(&m.payload, |m3| m3.p_dta = Digest(d)).map(TapAction::Replace)
        }),
        ("swap Z^x in M1", |m, rng, _| {
            if !is(m, MsgType::M1) {
                return None;
            }
            // Re-encrypt attacker content to a key the attacker controls.
            let own = scalar_mult_base(&random_scalar(rng).ok()?);
            let z = fake_zy(rng, &own);
            rewrite::<Msg1>(&m.payload, |m1| m1.z = z).map(TapAction::Replace)
        }),
    ]
}

pub fn attack_mitm_ebake(seed: u64) -> AttackReport {
    let mut r = AttackReport::new("mitm", Scheme::Ebake);
    let mut divergent = false;
    for (i, (name, f)) in ebake_variants().into_iter().enumerate() {
        let mut n = ebake_network(seed);
        let q_x = n.ta().public_key(&device_x()).expect("directory");
        let mut rng = SeededRng::seed_from_u64(seed ^ (0x77 + i as u64));
        n.broker_mut()
            .tap_mut()
            .add_rule(Box::new(move |m, _| f(m, &mut rng, &q_x)));
        let s = n.handshake(device_x(), device_y());
        let status = s.status();
        let detail = match &status {
            HandshakeStatus::Established => {
                let same = s.keys_match();
                divergent |= !same;
                format!("both completed, keys equal: {same}")
            }
            HandshakeStatus::Failed { entity, error } => format!("{entity} rejected: {error}"),
            other => format!("{other:?}"),
        };
        // Any side holding a key the other does not share counts as success.
        if let (Some(a), Some(b)) = (&s.initiator_key, &s.responder_key) {
            if a.key() != b.key() {
                r.evidence.divergent_keys.push((a.fingerprint(), b.fingerprint()));
                divergent = true;
            }
        }
        r.step(format!("{name}: {detail}"));
        r.evidence.verdicts.push(Verdict {
            variant: name.to_owned(),
            accepted: status == HandshakeStatus::Established,
            detail,
        });
    }
    r.outcome = if divergent { Outcome::Success } else { Outcome::Failure };
    r
}

fn mitm_ebake(seed: u64) -> AttackReport {
    attack_mitm_ebake(seed)
}

// ---- flooding ---------------------------------------------------------

pub fn dos_flood(scheme: Scheme, count: usize, seed: u64) -> AttackReport {
    match scheme {
        Scheme::Das => dos_das(count, seed),
        Scheme::Ebake => dos_ebake(count, seed),
    }
}

fn dos_das(count: usize, seed: u64) -> AttackReport {
    let mut r = AttackReport::new("dos", Scheme::Das);
    if count == 0 {
        r.step("count is zero: nothing sent");
        return r;
    }
    let mut n = das_network(seed);
    n.handshake(device_x(), device_y()).expect("registered");
    let seen = n.broker().tap().transcript().of_type(MsgType::DasM1).next().cloned().expect("captured");
    let old: DasMsg1 = decode_envelope(&seen.raw).and_then(|e| e.message()).expect("captured M1");
    let mut rng = SeededRng::seed_from_u64(seed ^ 0xd05);
    let before = n.device(&device_y()).expect("responder").verifications;
    let mut ops = OpCounters::ZERO;
    let mut rejected = 0;
    for _ in 0..count {
        // Valid certificate, garbage signature: both checks run in full.
        let m = DasMsg1 {
            ts_x: n.now(),
            r_x: scalar_mult_base(&random_scalar(&mut rng).expect("seeded")),
            z_x: random_scalar(&mut rng).expect("seeded"),
            ..old.clone()
        };
        let mut c = [0u8; 16];
        rng.fill_bytes(&mut c);
        let env = Envelope::wrap(&m, CorrelationId(c), "mallory");
        inject(n.broker_mut(), &das_inbox(&device_y()), env.encode()).expect("topic");
        let (_, o) = counters::measure(|| while n.step() {});
        ops += o;
        if !n.broker().tap().transcript().entries().last().is_some_and(|e| e.raw[1..17] == c) {
            rejected += 1;
        }
    }
    let processed = n.device(&device_y()).expect("responder").verifications - before;
    r.step(format!("sent {count} forged first messages"));
    r.step(format!("responder ran full verification on {processed}, rejected {rejected}, never blocked"));
    r.evidence.processed = Some(processed);
    r.evidence.refused = Some(0);
    r.evidence.receiver_ops = Some(ops);
    r.outcome = if processed == count as u64 {
        Outcome::Success
    } else {
        Outcome::Failure
    };
    r
}

fn dos_ebake(count: usize, seed: u64) -> AttackReport {
    let mut r = AttackReport::new("dos", Scheme::Ebake);
    if count == 0 {
        r.step("count is zero: nothing sent");
        return r;
    }
    let mut n = ebake_network(seed);
    let block_ms = n.config().block_ms;
    let mut rng = SeededRng::seed_from_u64(seed ^ 0xd05);
    let sender = "mallory";
    let forge = |n: &mut EbakeNetwork<AdversaryTap>, rng: &mut SeededRng| {
        let mut w = vec![0u8; 90];
        rng.fill_bytes(&mut w);
        let mut y = [0u8; 33];
        rng.fill_bytes(&mut y);
        let mut z = vec![0u8; 150];
        rng.fill_bytes(&mut z);
        let mut c = [0u8; 16];
        rng.fill_bytes(&mut c);
        let m = Msg1 {
            w,
            y,
            z,
            p_dx: Digest([0; 32]),
            t1: n.now(),
        };
        let env = Envelope::wrap(&m, CorrelationId(c), sender);
        inject_and_drain(n, topics::TA_INBOX, env.encode())
    };
    let before = n.ta().verifications();
    let (mut processed_ops, mut refused) = (OpCounters::ZERO, 0u64);
    for _ in 0..count {
        let (ev, ops) = counters::measure(|| forge(&mut n, &mut rng));
        processed_ops += ops;
        if matches!(ev.first(), Some(TaEvent::Rejected { error, .. }) if error.reason == crate::ebake::FailureReason::Blocked) {
            refused += 1;
        }
    }
    let processed = n.ta().verifications() - before;
    r.step(format!("sent {count} forged M1 from {sender}"));
    r.step(format!("TA verified {processed}, refused {refused} as blocked"));
    let until = n.ta().blocklist().blocked_until(&crate::ebake::Peer::Client(sender.into()));
    let mut held = true;
    if let Some(until) = until {
        n.clock().set(until - 1);
        let still = n.ta().is_blocked(sender, n.now());
        r.step(format!("1 ms before expiry ({} ms after block): blocked = {still}", block_ms - 1));
        n.clock().set(until + 1);
        let after = n.ta().is_blocked(sender, n.now());
        r.step(format!("1 ms after expiry: blocked = {after}"));
        held = still && !after;
    }
    r.evidence.processed = Some(processed);
    r.evidence.refused = Some(refused);
    r.evidence.receiver_ops = Some(processed_ops);
    let mitigated = processed == count.min(crate::ebake::BLOCK_THRESHOLD as usize) as u64
        && refused == count.saturating_sub(crate::ebake::BLOCK_THRESHOLD as usize) as u64
        && held;
    r.outcome = if mitigated { Outcome::Failure } else { Outcome::Success };
    r
}
