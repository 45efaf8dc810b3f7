use std::collections::HashMap;

use rand::{CryptoRng, RngCore};

use super::blocklist::{BlockList, Peer};
use super::messages::{Msg1, Msg2, Msg3, Msg4, TopicNotice, Y_LEN};
use super::se::{ExposedDeviceData, SecureElement, SessionInputs};
use super::ta::{msg1_tag_extra, msg3_tag_extra, msg4_tag_extra};
use super::{topics, FailureReason, ProtocolConfig, ProtocolError, SessionKey, Step};
use crate::codec::{decode_envelope, encode_fields, Envelope, Field, FieldReader, MsgType};
use crate::crypto::rng::random_array;
use crate::crypto::{asym_encrypt, random_nonce, Digest, HybridCiphertext, Point, NONCE_LEN};
use crate::id::{CorrelationId, DeviceId, Timestamp};

/// Initiator state between M1 and M4.
#[derive(Clone)]
pub struct InitiatorPending {
    pub target: DeviceId,
    nonce: Vec<u8>,
    pub t1: Timestamp,
}

/// Responder state between M3 and the topic notice.
#[derive(Clone)]
pub struct ResponderPending {
    key: Digest,
    pub peer: DeviceId,
    pub created: Timestamp,
    nonce: Vec<u8>,
}

#[derive(Debug, Clone)]
pub enum DeviceEvent {
    /// Publish this envelope to the TA inbox.
    Reply(Envelope),
    Established(SessionKey),
    Rejected(ProtocolError),
    Ignored,
}

/// One device; plays either role.
pub struct Device {
    se: SecureElement,
    config: ProtocolConfig,
    blocklist: BlockList,
    initiated: HashMap<CorrelationId, InitiatorPending>,
    responding: HashMap<CorrelationId, ResponderPending>,
}

impl Device {
    pub fn new(se: SecureElement, config: ProtocolConfig) -> Device {
        Device {
            se,
            config,
            blocklist: BlockList::new(config.block_ms),
            initiated: HashMap::new(),
            responding: HashMap::new(),
        }
    }

    pub fn id(&self) -> DeviceId {
        self.se.id()
    }

    pub fn public_key(&self) -> Point {
        self.se.public_key()
    }

    pub fn inbox(&self) -> String {
        topics::device_inbox(&self.se.route())
    }

    pub fn exposed(&self) -> ExposedDeviceData {
        self.se.exposed()
    }

    pub fn blocklist(&self) -> &BlockList {
        &self.blocklist
    }

    pub fn is_ta_blocked(&self, now: Timestamp) -> bool {
        self.blocklist.check_blocked(&Peer::Ta, now)
    }

    pub fn pending_initiations(&self) -> impl Iterator<Item = (&CorrelationId, &InitiatorPending)> {
        self.initiated.iter()
    }

    /// Nonces this device generated and still remembers; test hook for the
    /// transcript scanner.
    pub fn remembered_nonces(&self) -> Vec<Vec<u8>> {
        self.initiated
            .values()
            .map(|p| p.nonce.clone())
            .chain(self.responding.values().map(|p| p.nonce.clone()))
            .collect()
    }

    fn fail(&mut self, step: Step, reason: FailureReason, now: Timestamp) -> ProtocolError {
        if reason.counts_against_peer() {
            self.blocklist.record_failure(&Peer::Ta, now);
        }
        ProtocolError::new(step, reason)
    }

    /// Step 1. Returns the correlation id and the envelope for the TA inbox.
    pub fn start<R: RngCore + CryptoRng>(
        &mut self,
        target: DeviceId,
        target_key: &Point,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<(CorrelationId, Envelope), ProtocolError> {
        let step = Step::InitiatorStart;
        let entropy = |_| ProtocolError::new(step, FailureReason::Entropy);
        let correlation = CorrelationId(random_array(rng).map_err(entropy)?);
        let nonce = random_nonce(rng, NONCE_LEN).map_err(entropy)?;
        let t1 = now;
        let w = self.se.seal_identity(rng).map_err(entropy)?;
        let y: [u8; Y_LEN] = self
            .se
            .mask(&target_key.to_compressed())
            .expect("33-byte mask")
            .try_into()
            .expect("33 bytes");
        let z_plain = encode_fields(&[
            Field::Point(self.se.public_key().to_compressed()),
            Field::Id(self.se.id().0),
            Field::Bytes(nonce.clone()),
            Field::Timestamp(t1),
        ]);
        let z = asym_encrypt(target_key, &z_plain, rng)
            .map_err(|_| ProtocolError::new(step, FailureReason::Decryption))?
            .to_bytes();
        let p_dx = self.se.verifier_tag("EBAKE-Pdx", &msg1_tag_extra(t1, &z));
        let m1 = Msg1 { w, y, z, p_dx, t1 };
        self.initiated.insert(correlation, InitiatorPending { target, nonce, t1 });
        Ok((correlation, Envelope::wrap(&m1, correlation, &self.inbox())))
    }

    /// Step 3: authenticate the TA, open Z, answer with M3. The responder
    /// holds SK from here on and releases it once the topic arrives.
    pub fn respond<R: RngCore + CryptoRng>(
        &mut self,
        correlation: CorrelationId,
        m2: &Msg2,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<Envelope, ProtocolError> {
        let step = Step::ResponderMsg2;
        if self.is_ta_blocked(now) {
            return Err(ProtocolError::new(step, FailureReason::Blocked));
        }
        match self.verify_msg2(correlation, m2, now, rng) {
            Ok(env) => {
                self.blocklist.record_success(&Peer::Ta);
                Ok(env)
            }
            Err(reason) => Err(self.fail(step, reason, now)),
        }
    }

    fn verify_msg2<R: RngCore + CryptoRng>(
        &mut self,
        correlation: CorrelationId,
        m2: &Msg2,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<Envelope, FailureReason> {
        if !self.config.is_fresh(m2.t2, now) {
            return Err(FailureReason::StaleTimestamp);
        }
        let p_dy = self.se.verifier_tag("EBAKE-Pdy", &[Field::Timestamp(m2.t2)]);
        if !p_dy.verify(&m2.p_dy) {
            return Err(FailureReason::TagMismatch);
        }
        let z = HybridCiphertext::from_bytes(&m2.z).map_err(|_| FailureReason::Decryption)?;
        let pt = self.se.decrypt(&z).map_err(|_| FailureReason::Decryption)?;
        let (q_x, id_x, n_x, t1) = read_z(&pt).ok_or(FailureReason::Malformed)?;
        if !self.config.is_fresh(t1, now) {
            return Err(FailureReason::StaleTimestamp);
        }
        let id_y = self.se.id();
        let n_y = random_nonce(rng, NONCE_LEN).map_err(|_| FailureReason::Entropy)?;
        let t2 = m2.t2;
        let zy_plain = encode_fields(&[Field::Id(id_y.0), Field::Bytes(n_y.clone()), Field::Timestamp(t2)]);
        let z_y = asym_encrypt(&q_x, &zy_plain, rng)
            .map_err(|_| FailureReason::Decryption)?
            .to_bytes();
        let t3 = now;
        let p_dta = self.se.verifier_tag("EBAKE-PdTA", &msg3_tag_extra(&id_x, &id_y, t3, &z_y));
        let key = self.se.session_key(&SessionInputs {
            id_init: id_x,
            n_init: &n_x,
            t1,
            id_resp: id_y,
            n_resp: &n_y,
            t2,
        });
        self.responding.insert(
            correlation,
            ResponderPending {
                key,
                peer: id_x,
                created: now,
                nonce: n_y,
            },
        );
        let m3 = Msg3 { z_y, p_dta, t3 };
        Ok(Envelope::wrap(&m3, correlation, &self.inbox()))
    }

    /// Step 5: authenticate the TA and the responder; derive SK.
    pub fn finish(&mut self, correlation: CorrelationId, m4: &Msg4, now: Timestamp) -> Result<SessionKey, ProtocolError> {
        let step = Step::InitiatorMsg4;
        if self.is_ta_blocked(now) {
            return Err(ProtocolError::new(step, FailureReason::Blocked));
        }
        match self.verify_msg4(correlation, m4, now) {
            Ok(k) => {
                self.blocklist.record_success(&Peer::Ta);
                self.initiated.remove(&correlation);
                Ok(k)
            }
            Err(reason) => Err(self.fail(step, reason, now)),
        }
    }

    fn verify_msg4(&mut self, correlation: CorrelationId, m4: &Msg4, now: Timestamp) -> Result<SessionKey, FailureReason> {
        let pending = self.initiated.get(&correlation).ok_or(FailureReason::MissingPending)?.clone();
        if !self.config.is_fresh(m4.t4, now) {
            return Err(FailureReason::StaleTimestamp);
        }
        let p_dxx = self.se.verifier_tag("EBAKE-Pdxx", &msg4_tag_extra(&m4.z_y, m4.t4, &m4.topic));
        if !p_dxx.verify(&m4.p_dxx) {
            return Err(FailureReason::TagMismatch);
        }
        let z_y = HybridCiphertext::from_bytes(&m4.z_y).map_err(|_| FailureReason::Decryption)?;
        let pt = self.se.decrypt(&z_y).map_err(|_| FailureReason::Decryption)?;
        let (id_y, n_y, t2) = read_zy(&pt).ok_or(FailureReason::Malformed)?;
        if id_y != pending.target {
            return Err(FailureReason::IdentityMismatch);
        }
        let key = self.se.session_key(&SessionInputs {
            id_init: self.se.id(),
            n_init: &pending.nonce,
            t1: pending.t1,
            id_resp: id_y,
            n_resp: &n_y,
            t2,
        });
        Ok(SessionKey::new(key, m4.topic.clone(), id_y, now))
    }

    /// Responder receives the session topic and releases SK.
    pub fn accept_topic(
        &mut self,
        correlation: CorrelationId,
        notice: &TopicNotice,
        now: Timestamp,
    ) -> Result<SessionKey, ProtocolError> {
        let step = Step::ResponderTopic;
        if self.is_ta_blocked(now) {
            return Err(ProtocolError::new(step, FailureReason::Blocked));
        }
        let ttl = self.config.pending_ttl_ms();
        self.responding.retain(|_, p| now.saturating_sub(p.created) <= ttl);
        if !self.responding.contains_key(&correlation) {
            return Err(self.fail(step, FailureReason::MissingPending, now));
        }
        if !self.config.is_fresh(notice.t4, now) {
            return Err(self.fail(step, FailureReason::StaleTimestamp, now));
        }
        let p = self.responding.remove(&correlation).expect("checked above");
        Ok(SessionKey::new(p.key, notice.topic.clone(), p.peer, now))
    }

    /// Drop initiations older than the handshake timeout.
    pub fn expire(&mut self, now: Timestamp) -> Vec<CorrelationId> {
        let timeout = self.config.handshake_timeout_ms();
        let dead: Vec<_> = self
            .initiated
            .iter()
            .filter(|(_, p)| now.saturating_sub(p.t1) > timeout)
            .map(|(c, _)| *c)
            .collect();
        for c in &dead {
            self.initiated.remove(c);
        }
        dead
    }

    /// Decode and dispatch one inbox message.
    pub fn handle_raw<R: RngCore + CryptoRng>(&mut self, raw: &[u8], now: Timestamp, rng: &mut R) -> DeviceEvent {
        let Ok(env) = decode_envelope(raw) else {
            return DeviceEvent::Ignored;
        };
        let c = env.correlation;
        let r = match env.msg_type {
            MsgType::M2 => env.message::<Msg2>().map(|m| self.respond(c, &m, now, rng).map(DeviceEvent::Reply)),
            MsgType::M4 => env.message::<Msg4>().map(|m| self.finish(c, &m, now).map(DeviceEvent::Established)),
            MsgType::TopicNotice => env
                .message::<TopicNotice>()
                .map(|m| self.accept_topic(c, &m, now).map(DeviceEvent::Established)),
            _ => return DeviceEvent::Ignored,
        };
        match r {
            Ok(Ok(ev)) => ev,
            Ok(Err(e)) => DeviceEvent::Rejected(e),
            Err(_) => DeviceEvent::Ignored,
        }
    }
}

fn read_z(pt: &[u8]) -> Option<(Point, DeviceId, Vec<u8>, Timestamp)> {
    let mut r = FieldReader::parse(pt).ok()?;
    let q = Point::from_compressed(&r.point().ok()?).ok()?;
    let id = r.id().ok()?;
    let n = r.bytes().ok()?;
    let t = r.timestamp().ok()?;
    r.finish().ok()?;
    (n.len() == NONCE_LEN).then_some((q, id, n, t))
}

fn read_zy(pt: &[u8]) -> Option<(DeviceId, Vec<u8>, Timestamp)> {
    let mut r = FieldReader::parse(pt).ok()?;
    let id = r.id().ok()?;
    let n = r.bytes().ok()?;
    let t = r.timestamp().ok()?;
    r.finish().ok()?;
    (n.len() == NONCE_LEN).then_some((id, n, t))
}
