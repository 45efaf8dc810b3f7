use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::blocklist::{BlockList, Peer};
use super::messages::{Msg1, Msg2, Msg3, Msg4, TopicNotice};
use super::se::{dp1_fields, DeviceCredentials};
use super::{topics, EbakeError, FailureReason, ProtocolConfig, ProtocolError, Step};
use crate::codec::{decode_envelope, Envelope, Field, FieldReader, MsgType};
use crate::crypto::group::mul_uncounted;
use crate::crypto::hash::hash_uncounted;
use crate::crypto::rng::random_array;
use crate::crypto::{hash, random_scalar, sym_decrypt, xor_mask, Digest, Point, Scalar, SymKey};
use crate::id::{CorrelationId, DeviceId, Timestamp};

/// What the TA stores per registered device.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaDeviceRecord {
    pub id: DeviceId,
    pub dp1: Digest,
    pub kdta_generation: u32,
    pub public_key: Point,
    #[serde(with = "crate::hexser::array")]
    pub route: [u8; 8],
}

#[derive(Debug, Clone)]
struct PendingTa {
    id_x: DeviceId,
    id_y: DeviceId,
    created: Timestamp,
}

/// An envelope the TA wants published.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub topic: String,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaEvent {
    Forwarded { correlation: CorrelationId },
    Completed { correlation: CorrelationId, topic: String },
    Rejected { sender: String, error: ProtocolError },
    Ignored,
}

pub struct TrustedAuthority {
    config: ProtocolConfig,
    /// K_dta history, oldest first; the last entry is current.
    generations: Vec<(u32, SymKey)>,
    records: BTreeMap<DeviceId, TaDeviceRecord>,
    by_key: HashMap<[u8; 33], DeviceId>,
    pending: HashMap<CorrelationId, PendingTa>,
    blocklist: BlockList,
    seen: HashSet<(Digest, Timestamp)>,
    /// Full verifications attempted on M1 (blocked messages excluded).
    verifications: u64,
}

impl TrustedAuthority {
    pub fn initialize<R: RngCore + CryptoRng>(config: ProtocolConfig, rng: &mut R) -> Result<Self, EbakeError> {
        let k = SymKey::generate(rng)?;
        Ok(Self::from_parts(config, vec![(1, k)], Vec::new()))
    }

    pub(crate) fn from_parts(config: ProtocolConfig, generations: Vec<(u32, SymKey)>, records: Vec<TaDeviceRecord>) -> Self {
        let mut ta = TrustedAuthority {
            config,
            generations,
            records: BTreeMap::new(),
            by_key: HashMap::new(),
            pending: HashMap::new(),
            blocklist: BlockList::new(config.block_ms),
            seen: HashSet::new(),
            verifications: 0,
        };
        for r in records {
            ta.by_key.insert(r.public_key.to_compressed(), r.id);
            ta.records.insert(r.id, r);
        }
        ta
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    pub fn current_generation(&self) -> u32 {
        self.generations.last().expect("at least one K_dta").0
    }

    /// The TA's current shared secret. The TA is trusted; this exists so
    /// tests can play a curious TA.
    pub fn current_kdta(&self) -> &SymKey {
        &self.generations.last().expect("at least one K_dta").1
    }

    pub(crate) fn generations(&self) -> &[(u32, SymKey)] {
        &self.generations
    }

    /// Start a new K_dta generation. Existing devices keep theirs until re-registered.
    pub fn rotate_kdta<R: RngCore + CryptoRng>(&mut self, rng: &mut R) -> Result<u32, EbakeError> {
        let g = self.current_generation() + 1;
        self.generations.push((g, SymKey::generate(rng)?));
        Ok(g)
    }

    pub fn register_device<R: RngCore + CryptoRng>(
        &mut self,
        id: DeviceId,
        rng: &mut R,
    ) -> Result<DeviceCredentials, EbakeError> {
        if self.records.contains_key(&id) {
            return Err(EbakeError::DuplicateIdentity(id));
        }
        let (generation, k_dta) = self.generations.last().cloned().expect("at least one K_dta");
        let r_d = random_scalar(rng)?;
        let public_key = mul_uncounted(&r_d, &Point::generator());
        let dp1 = hash_uncounted("EBAKE-DP1", &dp1_fields(&id, &r_d, &k_dta));
        let mut route: [u8; 8] = random_array(rng)?;
        while self.records.values().any(|r| r.route == route) {
            route = random_array(rng)?;
        }
        let rec = TaDeviceRecord {
            id,
            dp1,
            kdta_generation: generation,
            public_key,
            route,
        };
        self.by_key.insert(public_key.to_compressed(), id);
        self.records.insert(id, rec);
        Ok(DeviceCredentials {
            id,
            r_d,
            k_dta,
            dp1,
            route,
            kdta_generation: generation,
        })
    }

    /// Drop a device so it can be re-provisioned (e.g. after rotation).
    pub fn deregister(&mut self, id: &DeviceId) -> Result<(), EbakeError> {
        let rec = self.records.remove(id).ok_or(EbakeError::UnknownIdentity(*id))?;
        self.by_key.remove(&rec.public_key.to_compressed());
        Ok(())
    }

    pub fn record(&self, id: &DeviceId) -> Option<&TaDeviceRecord> {
        self.records.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &TaDeviceRecord> {
        self.records.values()
    }

    /// Public key directory for initiators.
    pub fn public_key(&self, id: &DeviceId) -> Option<Point> {
        self.records.get(id).map(|r| r.public_key)
    }

    pub fn blocklist(&self) -> &BlockList {
        &self.blocklist
    }

    pub fn is_blocked(&self, sender: &str, now: Timestamp) -> bool {
        self.blocklist.check_blocked(&Peer::Client(sender.to_owned()), now)
    }

    pub fn verifications(&self) -> u64 {
        self.verifications
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    fn fail(&mut self, sender: &Peer, step: Step, reason: FailureReason, now: Timestamp) -> ProtocolError {
        if reason.counts_against_peer() {
            self.blocklist.record_failure(sender, now);
        }
        ProtocolError::new(step, reason)
    }

    fn expire(&mut self, now: Timestamp) {
        let ttl = self.config.pending_ttl_ms();
        self.pending.retain(|_, p| now.saturating_sub(p.created) <= ttl);
    }

    /// Step 2: authenticate the initiator and forward to the responder.
    pub fn handle_msg1(
        &mut self,
        sender: &str,
        correlation: CorrelationId,
        m1: &Msg1,
        now: Timestamp,
    ) -> Result<Outgoing, ProtocolError> {
        let peer = Peer::Client(sender.to_owned());
        let step = Step::TaMsg1;
        if self.blocklist.check_blocked(&peer, now) {
            return Err(ProtocolError::new(step, FailureReason::Blocked));
        }
        self.verifications += 1;
        match self.verify_msg1(correlation, m1, now) {
            Ok(out) => {
                self.blocklist.record_success(&peer);
                Ok(out)
            }
            Err(reason) => Err(self.fail(&peer, step, reason, now)),
        }
    }

    fn verify_msg1(&mut self, correlation: CorrelationId, m1: &Msg1, now: Timestamp) -> Result<Outgoing, FailureReason> {
        if !self.config.is_fresh(m1.t1, now) {
            return Err(FailureReason::StaleTimestamp);
        }
        if self.config.replay_cache && self.seen.contains(&(m1.p_dx, m1.t1)) {
            return Err(FailureReason::Replay);
        }
        // Newest generation first; devices provisioned before a rotation
        // still hold an older key.
        let mut opened = None;
        for (g, k) in self.generations.iter().rev() {
            if let Ok(pt) = sym_decrypt(k, &m1.w) {
                opened = Some((*g, k.clone(), pt));
                break;
            }
        }
        let (generation, k_dta, pt) = opened.ok_or(FailureReason::SymAuthentication)?;
        let (id_x, r_x) = read_identity(&pt).ok_or(FailureReason::Malformed)?;
        let rec_x = self.records.get(&id_x).ok_or(FailureReason::UnknownDevice)?.clone();
        if rec_x.kdta_generation != generation {
            return Err(FailureReason::KeyGenerationMismatch);
        }
        let dp1 = hash("EBAKE-DP1", &dp1_fields(&id_x, &r_x, &k_dta));
        let p_dx = hash("EBAKE-Pdx", &with_dp1(&dp1, msg1_tag_extra(m1.t1, &m1.z)));
        if !(p_dx.verify(&m1.p_dx) & dp1.verify(&rec_x.dp1)) {
            return Err(FailureReason::TagMismatch);
        }
        let q_y = xor_mask(&dp1, &m1.y).map_err(|_| FailureReason::Malformed)?;
        let q_y: [u8; 33] = q_y.try_into().map_err(|_| FailureReason::Malformed)?;
        let id_y = *self.by_key.get(&q_y).ok_or(FailureReason::UnknownResponder)?;
        if id_y == id_x {
            return Err(FailureReason::IdentityMismatch);
        }
        let rec_y = &self.records[&id_y];
        if rec_y.kdta_generation != rec_x.kdta_generation {
            return Err(FailureReason::KeyGenerationMismatch);
        }
        let t2 = now;
        let p_dy = hash("EBAKE-Pdy", &[Field::Digest(rec_y.dp1.0), Field::Timestamp(t2)]);
        let m2 = Msg2 {
            z: m1.z.clone(),
            p_dy,
            t2,
        };
        let topic = topics::device_inbox(&rec_y.route);
        if self.config.replay_cache {
            self.seen.insert((m1.p_dx, m1.t1));
        }
        self.expire(now);
        self.pending.insert(
            correlation,
            PendingTa {
                id_x,
                id_y,
                created: now,
            },
        );
        Ok(Outgoing {
            topic,
            envelope: Envelope::wrap(&m2, correlation, topics::TA_CLIENT),
        })
    }

    /// Step 4: authenticate the responder, allocate the session topic and
    /// notify both devices.
    pub fn handle_msg3<R: RngCore + CryptoRng>(
        &mut self,
        sender: &str,
        correlation: CorrelationId,
        m3: &Msg3,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<Vec<Outgoing>, ProtocolError> {
        let peer = Peer::Client(sender.to_owned());
        let step = Step::TaMsg3;
        if self.blocklist.check_blocked(&peer, now) {
            return Err(ProtocolError::new(step, FailureReason::Blocked));
        }
        match self.verify_msg3(correlation, m3, now, rng) {
            Ok(out) => {
                self.blocklist.record_success(&peer);
                Ok(out)
            }
            Err(reason) => Err(self.fail(&peer, step, reason, now)),
        }
    }

    fn verify_msg3<R: RngCore + CryptoRng>(
        &mut self,
        correlation: CorrelationId,
        m3: &Msg3,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<Vec<Outgoing>, FailureReason> {
        self.expire(now);
        let pending = self.pending.get(&correlation).ok_or(FailureReason::MissingPending)?.clone();
        if !self.config.is_fresh(m3.t3, now) {
            return Err(FailureReason::StaleTimestamp);
        }
        let rec_x = self.records.get(&pending.id_x).ok_or(FailureReason::UnknownDevice)?;
        let rec_y = self.records.get(&pending.id_y).ok_or(FailureReason::UnknownDevice)?;
        let p_dta = hash(
            "EBAKE-PdTA",
            &with_dp1(&rec_y.dp1, msg3_tag_extra(&pending.id_x, &pending.id_y, m3.t3, &m3.z_y)),
        );
        if !p_dta.verify(&m3.p_dta) {
            return Err(FailureReason::TagMismatch);
        }
        let random: [u8; 16] = random_array(rng).map_err(|_| FailureReason::Entropy)?;
        let topic = topics::session_topic(&random);
        let t4 = now;
        let p_dxx = hash("EBAKE-Pdxx", &with_dp1(&rec_x.dp1, msg4_tag_extra(&m3.z_y, t4, &topic)));
        let m4 = Msg4 {
            z_y: m3.z_y.clone(),
            p_dxx,
            t4,
            topic: topic.clone(),
        };
        let notice = TopicNotice { topic, t4 };
        let out = vec![
            Outgoing {
                topic: topics::device_inbox(&rec_x.route),
                envelope: Envelope::wrap(&m4, correlation, topics::TA_CLIENT),
            },
            Outgoing {
                topic: topics::device_inbox(&rec_y.route),
                envelope: Envelope::wrap(&notice, correlation, topics::TA_CLIENT),
            },
        ];
        self.pending.remove(&correlation);
        Ok(out)
    }

    /// Decode and dispatch one inbox message.
    pub fn handle_raw<R: RngCore + CryptoRng>(
        &mut self,
        raw: &[u8],
        now: Timestamp,
        rng: &mut R,
    ) -> (Vec<Outgoing>, TaEvent) {
        let env = match decode_envelope(raw) {
            Ok(env) => env,
            Err(_) => return (Vec::new(), TaEvent::Ignored),
        };
        let sender = env.sender.clone();
        let correlation = env.correlation;
        let result = match env.msg_type {
            MsgType::M1 => match env.message::<Msg1>() {
                Ok(m1) => self
                    .handle_msg1(&sender, correlation, &m1, now)
                    .map(|o| (vec![o], TaEvent::Forwarded { correlation })),
                Err(_) => Err(self.malformed(&sender, Step::TaMsg1, now)),
            },
            MsgType::M3 => match env.message::<Msg3>() {
                Ok(m3) => self.handle_msg3(&sender, correlation, &m3, now, rng).map(|o| {
                    let topic = o.first().and_then(|o| o.envelope.message::<Msg4>().ok()).map(|m| m.topic).unwrap_or_default();
                    (o, TaEvent::Completed { correlation, topic })
                }),
                Err(_) => Err(self.malformed(&sender, Step::TaMsg3, now)),
            },
            _ => return (Vec::new(), TaEvent::Ignored),
        };
        match result {
            Ok(r) => r,
            Err(error) => (Vec::new(), TaEvent::Rejected { sender, error }),
        }
    }

    fn malformed(&mut self, sender: &str, step: Step, now: Timestamp) -> ProtocolError {
        let peer = Peer::Client(sender.to_owned());
        if self.blocklist.check_blocked(&peer, now) {
            return ProtocolError::new(step, FailureReason::Blocked);
        }
        self.fail(&peer, step, FailureReason::Malformed, now)
    }
}

fn read_identity(pt: &[u8]) -> Option<(DeviceId, Scalar)> {
    let mut r = FieldReader::parse(pt).ok()?;
    let id = r.id().ok()?;
    let s = Scalar::from_bytes(&r.scalar().ok()?).ok()?;
    r.finish().ok()?;
    Some((id, s))
}

fn with_dp1(dp1: &Digest, mut extra: Vec<Field>) -> Vec<Field> {
    extra.insert(0, Field::Digest(dp1.0));
    extra
}

pub(crate) fn msg1_tag_extra(t1: Timestamp, z: &[u8]) -> Vec<Field> {
    vec![Field::Timestamp(t1), Field::Bytes(z.to_vec())]
}

pub(crate) fn msg3_tag_extra(id_x: &DeviceId, id_y: &DeviceId, t3: Timestamp, z_y: &[u8]) -> Vec<Field> {
    vec![
        Field::Id(id_x.0),
        Field::Id(id_y.0),
        Field::Timestamp(t3),
        Field::Bytes(z_y.to_vec()),
    ]
}

pub(crate) fn msg4_tag_extra(z_y: &[u8], t4: Timestamp, topic: &str) -> Vec<Field> {
    vec![Field::Bytes(z_y.to_vec()), Field::Timestamp(t4), Field::Str(topic.to_owned())]
}
