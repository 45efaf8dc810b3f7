//! Handshake drivers: protocol nodes wired to a [`Broker`] on simulated time.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, ManualClock};
use crate::codec::{decode_envelope, Envelope, MsgType};
use crate::crypto::counters::{self, OpCounters};
use crate::crypto::rng::random_array;
use crate::crypto::Digest;
use crate::das::{DasAuthority, DasDevice, DasDeviceState, DasError, DasMsg1, DasMsg2, DasMsg3};
use crate::ebake::{
    topics, Device, DeviceEvent, EbakeError, FailureReason, ProtocolConfig, ProtocolError, SecureElement,
    SessionKey, Step, TaEvent, TrustedAuthority,
};
use crate::id::{CorrelationId, DeviceId, Timestamp};
use crate::transport::{Broker, ChannelTap, DeliveryMode, Metrics, PassThrough, SubscriptionId};
use crate::SeededRng;

/// Primitive counts split by protocol role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounters {
    pub initiator: OpCounters,
    pub ta: OpCounters,
    pub responder: OpCounters,
}

impl RoleCounters {
    pub fn total(&self) -> OpCounters {
        self.initiator + self.ta + self.responder
    }
}

/// Handler wall time split by protocol role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoleTimings {
    pub initiator: Duration,
    pub ta: Duration,
    pub responder: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Entity {
    Ta,
    Device(DeviceId),
}

impl std::fmt::Display for Entity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Entity::Ta => f.write_str("TA"),
            Entity::Device(id) => write!(f, "device {id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Initiator,
    Ta,
    Responder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HandshakeStatus {
    Established,
    Failed { entity: Entity, error: ProtocolError },
    TimedOut,
    InProgress,
}

/// One handshake as seen from outside.
#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub correlation: CorrelationId,
    pub initiator: DeviceId,
    pub responder: DeviceId,
    pub started_at: Timestamp,
    pub initiator_key: Option<SessionKey>,
    pub responder_key: Option<SessionKey>,
    pub completed_at: Option<Timestamp>,
    pub counters: RoleCounters,
    /// Wall time spent inside protocol handlers.
    pub compute: Duration,
    pub timings: RoleTimings,
    pub errors: Vec<(Entity, ProtocolError)>,
    pub timed_out: bool,
}

impl SessionRecord {
    pub fn status(&self) -> HandshakeStatus {
        if self.initiator_key.is_some() && self.responder_key.is_some() {
            HandshakeStatus::Established
        } else if let Some((entity, error)) = self.errors.first() {
            HandshakeStatus::Failed {
                entity: *entity,
                error: *error,
            }
        } else if self.timed_out {
            HandshakeStatus::TimedOut
        } else {
            HandshakeStatus::InProgress
        }
    }

    pub fn keys_match(&self) -> bool {
        match (&self.initiator_key, &self.responder_key) {
            (Some(a), Some(b)) => a.key() == b.key() && a.topic == b.topic,
            _ => false,
        }
    }

    pub fn rtt_ms(&self) -> Option<u64> {
        self.completed_at.map(|c| c - self.started_at)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetEvent {
    Ta { at: Timestamp, event: TaEvent },
    Device { at: Timestamp, id: DeviceId, outcome: Result<MsgType, ProtocolError> },
}

fn correlation_of(raw: &[u8]) -> Option<(MsgType, CorrelationId)> {
    if raw.len() < 17 {
        return None;
    }
    let t = MsgType::from_u8(raw[0]).ok()?;
    Some((t, CorrelationId(raw[1..17].try_into().ok()?)))
}

/// Trusted authority, devices and broker for EBAKE runs.
pub struct EbakeNetwork<T: ChannelTap = PassThrough> {
    config: ProtocolConfig,
    clock: ManualClock,
    broker: Broker<T>,
    ta: TrustedAuthority,
    ta_sub: SubscriptionId,
    devices: BTreeMap<DeviceId, Device>,
    inbox_owner: HashMap<SubscriptionId, DeviceId>,
    rng: SeededRng,
    sessions: HashMap<CorrelationId, SessionRecord>,
    events: Vec<NetEvent>,
}

impl EbakeNetwork<PassThrough> {
    pub fn new(config: ProtocolConfig, mode: DeliveryMode, seed: u64) -> Result<Self, EbakeError> {
        Self::with_tap(config, mode, seed, PassThrough)
    }
}

impl<T: ChannelTap> EbakeNetwork<T> {
    pub fn with_tap(config: ProtocolConfig, mode: DeliveryMode, seed: u64, tap: T) -> Result<Self, EbakeError> {
        let mut rng = SeededRng::seed_from_u64(seed);
        let ta = TrustedAuthority::initialize(config, &mut rng)?;
        Ok(Self::assemble(ta, mode, rng, seed, tap))
    }

    /// Wrap an existing TA, e.g. one restored from a registry file.
    /// Devices are attached separately with [`EbakeNetwork::attach`].
    pub fn from_ta(ta: TrustedAuthority, mode: DeliveryMode, seed: u64, tap: T) -> Self {
        Self::assemble(ta, mode, SeededRng::seed_from_u64(seed), seed, tap)
    }

    fn assemble(ta: TrustedAuthority, mode: DeliveryMode, rng: SeededRng, seed: u64, tap: T) -> Self {
        let config = *ta.config();
        // Start well away from zero so "now - Δ" never saturates.
        let clock = ManualClock::new(1_700_000_000_000);
        let mut broker = Broker::with_tap(mode, clock.clone(), seed ^ 0x5eed, tap);
        let ta_sub = broker.subscribe(topics::TA_INBOX).expect("static filter");
        EbakeNetwork {
            config,
            clock,
            broker,
            ta,
            ta_sub,
            devices: BTreeMap::new(),
            inbox_owner: HashMap::new(),
            rng,
            sessions: HashMap::new(),
            events: Vec::new(),
        }
    }

    pub fn add_device(&mut self, id: DeviceId) -> Result<(), EbakeError> {
        let creds = self.ta.register_device(id, &mut self.rng)?;
        self.attach(Device::new(SecureElement::load(creds)?, self.config));
        Ok(())
    }

    /// Connect an already provisioned device to the broker.
    pub fn attach(&mut self, dev: Device) {
        let id = dev.id();
        let sub = self.broker.subscribe(&dev.inbox()).expect("device inbox filter");
        self.inbox_owner.insert(sub, id);
        self.devices.insert(id, dev);
    }

    pub fn into_ta(self) -> TrustedAuthority {
        self.ta
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn clock(&self) -> &ManualClock {
        &self.clock
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now_ms()
    }

    pub fn broker(&self) -> &Broker<T> {
        &self.broker
    }

    pub fn broker_mut(&mut self) -> &mut Broker<T> {
        &mut self.broker
    }

    pub fn ta(&self) -> &TrustedAuthority {
        &self.ta
    }

    pub fn ta_mut(&mut self) -> &mut TrustedAuthority {
        &mut self.ta
    }

    pub fn device(&self, id: &DeviceId) -> Option<&Device> {
        self.devices.get(id)
    }

    pub fn device_ids(&self) -> Vec<DeviceId> {
        self.devices.keys().copied().collect()
    }

    pub fn rng(&mut self) -> &mut SeededRng {
        &mut self.rng
    }

    pub fn events(&self) -> &[NetEvent] {
        &self.events
    }

    pub fn session(&self, c: &CorrelationId) -> Option<&SessionRecord> {
        self.sessions.get(c)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionRecord> {
        self.sessions.values()
    }

    pub fn metrics(&self) -> &Metrics {
        self.broker.metrics()
    }

    /// Step 1 at `x`, addressed to `y`; the M1 envelope goes on the wire.
    pub fn start(&mut self, x: DeviceId, y: DeviceId) -> Result<CorrelationId, ProtocolError> {
        let key = self
            .ta
            .public_key(&y)
            .ok_or(ProtocolError::new(Step::InitiatorStart, FailureReason::UnknownDevice))?;
        let now = self.now();
        let dev = self
            .devices
            .get_mut(&x)
            .ok_or(ProtocolError::new(Step::InitiatorStart, FailureReason::UnknownDevice))?;
        let rng = &mut self.rng;
        let t0 = Instant::now();
        let (r, ops) = counters::measure(|| dev.start(y, &key, now, rng));
        let compute = t0.elapsed();
        let (c, env) = r?;
        self.sessions.insert(
            c,
            SessionRecord {
                correlation: c,
                initiator: x,
                responder: y,
                started_at: now,
                initiator_key: None,
                responder_key: None,
                completed_at: None,
                counters: RoleCounters {
                    initiator: ops,
                    ..Default::default()
                },
                compute,
                timings: RoleTimings {
                    initiator: compute,
                    ..Default::default()
                },
                errors: Vec::new(),
                timed_out: false,
            },
        );
        self.broker
            .publish(topics::TA_INBOX, env.encode())
            .expect("static topic");
        Ok(c)
    }

    fn attribute(&mut self, c: Option<CorrelationId>, role: Role, ops: OpCounters, dt: Duration) {
        if let Some(s) = c.and_then(|c| self.sessions.get_mut(&c)) {
            match role {
                Role::Initiator => {
                    s.counters.initiator += ops;
                    s.timings.initiator += dt;
                }
                Role::Ta => {
                    s.counters.ta += ops;
                    s.timings.ta += dt;
                }
                Role::Responder => {
                    s.counters.responder += ops;
                    s.timings.responder += dt;
                }
            }
            s.compute += dt;
        }
    }

    /// Deliver one message. Returns false once the broker is idle.
    pub fn step(&mut self) -> bool {
        let Some(d) = self.broker.step() else {
            return false;
        };
        let now = self.now();
        let header = correlation_of(&d.payload);
        let corr = header.map(|h| h.1);
        if d.subscription == self.ta_sub {
            let (ta, rng) = (&mut self.ta, &mut self.rng);
            let t0 = Instant::now();
            let ((outs, ev), ops) = counters::measure(|| ta.handle_raw(&d.payload, now, rng));
            self.attribute(corr, Role::Ta, ops, t0.elapsed());
            if let (TaEvent::Rejected { error, .. }, Some(s)) = (&ev, corr.and_then(|c| self.sessions.get_mut(&c))) {
                s.errors.push((Entity::Ta, *error));
            }
            self.events.push(NetEvent::Ta { at: now, event: ev });
            for o in outs {
                self.broker.publish(&o.topic, o.envelope.encode()).expect("nonempty topic");
            }
            return true;
        }
        let Some(&id) = self.inbox_owner.get(&d.subscription) else {
            return true;
        };
        let role = match header.map(|h| h.0) {
            Some(MsgType::M4) => Role::Initiator,
            _ => Role::Responder,
        };
        let dev = self.devices.get_mut(&id).expect("owner registered");
        let rng = &mut self.rng;
        let t0 = Instant::now();
        let (ev, ops) = counters::measure(|| dev.handle_raw(&d.payload, now, rng));
        self.attribute(corr, role, ops, t0.elapsed());
        let outcome = match ev {
            DeviceEvent::Reply(env) => {
                let t = env.msg_type;
                self.broker.publish(topics::TA_INBOX, env.encode()).expect("static topic");
                Ok(t)
            }
            DeviceEvent::Established(key) => {
                let t = header.map(|h| h.0).unwrap_or(MsgType::App);
                if let Some(s) = corr.and_then(|c| self.sessions.get_mut(&c)) {
                    if role == Role::Initiator && s.initiator == id {
                        s.initiator_key = Some(key);
                        s.completed_at = Some(now);
                        let rtt = now - s.started_at;
                        self.broker.metrics_mut().record_rtt(rtt);
                    } else if s.responder == id {
                        s.responder_key = Some(key);
                    }
                }
                Ok(t)
            }
            DeviceEvent::Rejected(e) => {
                if let Some(s) = corr.and_then(|c| self.sessions.get_mut(&c)) {
                    s.errors.push((Entity::Device(id), e));
                }
                Err(e)
            }
            DeviceEvent::Ignored => return true,
        };
        self.events.push(NetEvent::Device { at: now, id, outcome });
        true
    }

    /// Deliver until the broker is idle, then time out what is left.
    pub fn run_until_idle(&mut self) {
        while self.step() {}
        self.settle();
    }

    fn settle(&mut self) {
        let open: Vec<Timestamp> = self
            .sessions
            .values()
            .filter(|s| s.initiator_key.is_none() && s.errors.is_empty() && !s.timed_out)
            .map(|s| s.started_at)
            .collect();
        let Some(latest) = open.into_iter().max() else {
            return;
        };
        let deadline = latest + self.config.handshake_timeout_ms() + 1;
        if self.now() < deadline {
            self.clock.set(deadline);
        }
        let now = self.now();
        for dev in self.devices.values_mut() {
            for c in dev.expire(now) {
                if let Some(s) = self.sessions.get_mut(&c) {
                    s.timed_out = true;
                }
            }
        }
    }

    /// Run one handshake to completion, failure or timeout.
    pub fn handshake(&mut self, x: DeviceId, y: DeviceId) -> SessionRecord {
        match self.start(x, y) {
            Ok(c) => {
                self.run_until_idle();
                self.sessions[&c].clone()
            }
            Err(e) => SessionRecord {
                correlation: CorrelationId([0; 16]),
                initiator: x,
                responder: y,
                started_at: self.now(),
                initiator_key: None,
                responder_key: None,
                completed_at: None,
                counters: RoleCounters::default(),
                compute: Duration::ZERO,
                timings: RoleTimings::default(),
                errors: vec![(Entity::Device(x), e)],
                timed_out: false,
            },
        }
    }
}

/// Outcome of one baseline-scheme run.
#[derive(Debug, Clone)]
pub struct DasSession {
    pub correlation: CorrelationId,
    pub initiator: DeviceId,
    pub responder: DeviceId,
    pub started_at: Timestamp,
    pub initiator_key: Option<Digest>,
    pub responder_key: Option<Digest>,
    pub completed_at: Option<Timestamp>,
    pub counters: RoleCounters,
    pub compute: Duration,
    pub errors: Vec<(DeviceId, DasError)>,
}

impl DasSession {
    pub fn established(&self) -> bool {
        self.initiator_key.is_some() && self.responder_key.is_some()
    }

    pub fn keys_match(&self) -> bool {
        self.established() && self.initiator_key == self.responder_key
    }
}

pub fn das_inbox(id: &DeviceId) -> String {
    format!("das/dev/{}/inbox", id.to_hex())
}

/// Devices of the baseline scheme talking directly over the broker.
pub struct DasNetwork<T: ChannelTap = PassThrough> {
    pub window: u64,
    clock: ManualClock,
    broker: Broker<T>,
    authority: DasAuthority,
    devices: BTreeMap<DeviceId, DasDevice>,
    inbox_owner: HashMap<SubscriptionId, DeviceId>,
    rng: SeededRng,
    sessions: HashMap<CorrelationId, DasSession>,
}

impl DasNetwork<PassThrough> {
    pub fn new(window: u64, mode: DeliveryMode, seed: u64) -> Self {
        Self::with_tap(window, mode, seed, PassThrough)
    }
}

impl<T: ChannelTap> DasNetwork<T> {
    pub fn with_tap(window: u64, mode: DeliveryMode, seed: u64, tap: T) -> Self {
        let mut rng = SeededRng::seed_from_u64(seed);
        let authority = DasAuthority::setup(&mut rng).expect("seeded rng");
        let clock = ManualClock::new(1_700_000_000_000);
        let broker = Broker::with_tap(mode, clock.clone(), seed ^ 0x5eed, tap);
        DasNetwork {
            window,
            clock,
            broker,
            authority,
            devices: BTreeMap::new(),
            inbox_owner: HashMap::new(),
            rng,
            sessions: HashMap::new(),
        }
    }

    pub fn add_device(&mut self, id: DeviceId) -> Result<(), DasError> {
        let st = self.authority.register(id, &mut self.rng)?;
        self.attach(st);
        Ok(())
    }

    fn attach(&mut self, st: DasDeviceState) {
        let id = st.id;
        let sub = self.broker.subscribe(&das_inbox(&id)).expect("inbox filter");
        self.inbox_owner.insert(sub, id);
        self.devices.insert(id, DasDevice::new(st, self.window));
    }

    pub fn authority(&self) -> &DasAuthority {
        &self.authority
    }

    pub fn authority_mut(&mut self) -> &mut DasAuthority {
        &mut self.authority
    }

    pub fn clock(&self) -> &ManualClock {
        &self.clock
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now_ms()
    }

    pub fn broker(&self) -> &Broker<T> {
        &self.broker
    }

    pub fn broker_mut(&mut self) -> &mut Broker<T> {
        &mut self.broker
    }

    pub fn device(&self, id: &DeviceId) -> Option<&DasDevice> {
        self.devices.get(id)
    }

    pub fn rng(&mut self) -> &mut SeededRng {
        &mut self.rng
    }

    pub fn session(&self, c: &CorrelationId) -> Option<&DasSession> {
        self.sessions.get(c)
    }

    pub fn start(&mut self, x: DeviceId, y: DeviceId) -> Result<CorrelationId, DasError> {
        let now = self.now();
        let c = CorrelationId(random_array(&mut self.rng)?);
        let dev = self.devices.get_mut(&x).ok_or(DasError::Unknown)?;
        let rng = &mut self.rng;
        let t0 = Instant::now();
        let (m1, ops) = counters::measure(|| dev.start(c, now, rng));
        let compute = t0.elapsed();
        let env = Envelope::wrap(&m1?, c, &das_inbox(&x));
        self.sessions.insert(
            c,
            DasSession {
                correlation: c,
                initiator: x,
                responder: y,
                started_at: now,
                initiator_key: None,
                responder_key: None,
                completed_at: None,
                counters: RoleCounters {
                    initiator: ops,
                    ..Default::default()
                },
                compute,
                errors: Vec::new(),
            },
        );
        self.broker.publish(&das_inbox(&y), env.encode()).expect("nonempty topic");
        Ok(c)
    }

    pub fn step(&mut self) -> bool {
        let Some(d) = self.broker.step() else {
            return false;
        };
        let now = self.now();
        let Some(&id) = self.inbox_owner.get(&d.subscription) else {
            return true;
        };
        let Ok(env) = decode_envelope(&d.payload) else {
            return true;
        };
        let c = env.correlation;
        let dev = self.devices.get_mut(&id).expect("owner registered");
        let rng = &mut self.rng;
        let t0 = Instant::now();
        let (r, ops) = counters::measure(|| -> Result<(Option<Envelope>, Option<Digest>), DasError> {
            match env.msg_type {
                MsgType::DasM1 => {
                    let m1: DasMsg1 = env.message().map_err(|_| DasError::Degenerate)?;
                    let m2 = dev.respond(c, &m1, now, rng)?;
                    Ok((Some(Envelope::wrap(&m2, c, &das_inbox(&id))), None))
                }
                MsgType::DasM2 => {
                    let m2: DasMsg2 = env.message().map_err(|_| DasError::Degenerate)?;
                    let (m3, sk) = dev.finish(c, &m2, now)?;
                    Ok((Some(Envelope::wrap(&m3, c, &das_inbox(&id))), Some(sk)))
                }
                MsgType::DasM3 => {
                    let m3: DasMsg3 = env.message().map_err(|_| DasError::Degenerate)?;
                    let (sk, _) = dev.confirm(c, &m3, now)?;
                    Ok((None, Some(sk)))
                }
                _ => Ok((None, None)),
            }
        });
        let dt = t0.elapsed();
        let initiator_side = env.msg_type == MsgType::DasM2;
        if let Some(s) = self.sessions.get_mut(&c) {
            if initiator_side {
                s.counters.initiator += ops;
            } else {
                s.counters.responder += ops;
            }
            s.compute += dt;
        }
        match r {
            Ok((out, key)) => {
                if let (Some(k), Some(s)) = (key, self.sessions.get_mut(&c)) {
                    if initiator_side && s.initiator == id {
                        s.initiator_key = Some(k);
                        s.completed_at = Some(now);
                        let rtt = now - s.started_at;
                        self.broker.metrics_mut().record_rtt(rtt);
                    } else if s.responder == id {
                        s.responder_key = Some(k);
                    }
                }
                if let Some(out) = out {
                    self.broker.publish(&env.sender, out.encode()).ok();
                }
            }
            Err(e) => {
                if let Some(s) = self.sessions.get_mut(&c) {
                    s.errors.push((id, e));
                }
            }
        }
        true
    }

    pub fn run_until_idle(&mut self) {
        while self.step() {}
    }

    pub fn handshake(&mut self, x: DeviceId, y: DeviceId) -> Result<DasSession, DasError> {
        let c = self.start(x, y)?;
        self.run_until_idle();
        Ok(self.sessions[&c].clone())
    }
}
