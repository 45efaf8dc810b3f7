//! Certificate-based device-to-device scheme used as the attack baseline.
//!
//! Devices exchange three messages directly; identities and certificate
//! material travel in the clear and nothing throttles repeated failures.

use std::collections::{BTreeMap, HashMap};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::codec::{CodecError, Field, FieldReader, MsgType, WireMessage};
use crate::crypto::group::mul_uncounted;
use crate::crypto::{hash, point_add, random_scalar, scalar_mult, scalar_mult_base, CryptoError, Digest, Point, Scalar};
use crate::id::{DeviceId, Timestamp};

/// Public system parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DasParams {
    pub curve: String,
    pub pub_ta: Point,
}

/// The TA's side: parameters plus its private key.
#[derive(Clone, Serialize, Deserialize)]
pub struct DasAuthority {
    pub params: DasParams,
    pr_ta: Scalar,
    registered: BTreeMap<DeviceId, Point>,
}

/// Everything loaded into a device's (unprotected) memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DasDeviceState {
    pub id: DeviceId,
    pub pr: Scalar,
    pub a: Point,
    pub c: Scalar,
    pub pub_key: Point,
    pub params: DasParams,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DasMsg1 {
    pub ts_x: Timestamp,
    pub id_x: DeviceId,
    pub c_x: Scalar,
    pub z_x: Scalar,
    pub a_x: Point,
    pub pub_x: Point,
    pub r_x: Point,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DasMsg2 {
    pub id_y: DeviceId,
    pub ts_y: Timestamp,
    pub a_y: Point,
    pub c_y: Scalar,
    pub z_y: Scalar,
    pub skv: Digest,
    pub pub_y: Point,
    pub r_y: Point,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DasMsg3 {
    pub skv: Digest,
    pub ts_x: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum DasError {
    #[error("timestamp outside the freshness window")]
    Stale,
    #[error("certificate check U failed")]
    Certificate,
    #[error("signature check W failed")]
    Signature,
    #[error("SKV mismatch")]
    Skv,
    #[error("duplicate identity")]
    Duplicate,
    #[error("unknown identity")]
    Unknown,
    #[error("degenerate scalar")]
    Degenerate,
}

impl From<CryptoError> for DasError {
    fn from(_: CryptoError) -> Self {
        DasError::Degenerate
    }
}

/// Which of the receiver's checks a first or second message passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DasVerdict {
    pub fresh: bool,
    pub certificate: bool,
    pub signature: bool,
}

impl DasVerdict {
    pub fn accepted(&self) -> bool {
        self.fresh && self.certificate && self.signature
    }

    fn into_result(self) -> Result<(), DasError> {
        if !self.fresh {
            Err(DasError::Stale)
        } else if !self.certificate {
            Err(DasError::Certificate)
        } else if !self.signature {
            Err(DasError::Signature)
        } else {
            Ok(())
        }
    }
}

fn digest_scalar(d: &Digest) -> Result<Scalar, DasError> {
    Scalar::reduce_bytes(d.as_bytes()).map_err(|_| DasError::Degenerate)
}

/// h(ID ‖ A), reduced mod n.
pub fn cert_hash(id: &DeviceId, a: &Point) -> Result<Scalar, DasError> {
    digest_scalar(&hash("DAS-cert", &[Field::Id(id.0), Field::Point(a.to_compressed())]))
}

/// h(A ‖ c ‖ R ‖ Pub ‖ TS), reduced mod n. The same operand order is used
/// for signing and verifying.
pub fn sig_hash(a: &Point, c: &Scalar, r: &Point, pub_key: &Point, ts: Timestamp) -> Result<Scalar, DasError> {
    digest_scalar(&hash(
        "DAS-sig",
        &[
            Field::Point(a.to_compressed()),
            Field::Scalar(c.to_bytes()),
            Field::Point(r.to_compressed()),
            Field::Point(pub_key.to_compressed()),
            Field::Timestamp(ts),
        ],
    ))
}

/// SK = h(B ‖ K ‖ TS_y ‖ TS_x ‖ ID_x ‖ ID_y), same order at both ends.
pub fn session_key(b: &Point, k: &Point, ts_y: Timestamp, ts_x: Timestamp, id_x: &DeviceId, id_y: &DeviceId) -> Digest {
    hash(
        "DAS-SK",
        &[
            Field::Point(b.to_compressed()),
            Field::Point(k.to_compressed()),
            Field::Timestamp(ts_y),
            Field::Timestamp(ts_x),
            Field::Id(id_x.0),
            Field::Id(id_y.0),
        ],
    )
}

pub fn skv(sk: &Digest, ts: Timestamp) -> Digest {
    hash("DAS-SKV", &[Field::Digest(sk.0), Field::Timestamp(ts)])
}

fn fresh(ts: Timestamp, now: Timestamp, window: u64) -> bool {
    now.abs_diff(ts) <= window
}

impl DasAuthority {
    pub fn setup<R: RngCore + CryptoRng>(rng: &mut R) -> Result<DasAuthority, CryptoError> {
        let pr_ta = random_scalar(rng)?;
        Ok(DasAuthority {
            params: DasParams {
                curve: crate::crypto::P256.name.to_owned(),
                pub_ta: mul_uncounted(&pr_ta, &Point::generator()),
            },
            pr_ta,
            registered: BTreeMap::new(),
        })
    }

    fn issue<R: RngCore + CryptoRng>(&self, id: DeviceId, rng: &mut R) -> Result<DasDeviceState, DasError> {
        let pr = random_scalar(rng)?;
        let l = random_scalar(rng)?;
        let pr_l = pr.checked_add(&l)?;
        let a = mul_uncounted(&pr_l, &Point::generator());
        let e = cert_hash(&id, &a)?;
        let c = self.pr_ta.checked_add(&pr_l.checked_mul(&e)?)?;
        Ok(DasDeviceState {
            id,
            pr,
            a,
            c,
            pub_key: mul_uncounted(&pr, &Point::generator()),
            params: self.params.clone(),
        })
    }

    pub fn register<R: RngCore + CryptoRng>(&mut self, id: DeviceId, rng: &mut R) -> Result<DasDeviceState, DasError> {
        if self.registered.contains_key(&id) {
            return Err(DasError::Duplicate);
        }
        let st = self.issue(id, rng)?;
        self.registered.insert(id, st.pub_key);
        Ok(st)
    }

    /// Dynamic addition: deploy `new_id` in place of `old` with fresh keys.
    pub fn replace_device<R: RngCore + CryptoRng>(
        &mut self,
        old: &DeviceId,
        new_id: DeviceId,
        rng: &mut R,
    ) -> Result<DasDeviceState, DasError> {
        if self.registered.remove(old).is_none() {
            return Err(DasError::Unknown);
        }
        if new_id != *old && self.registered.contains_key(&new_id) {
            return Err(DasError::Duplicate);
        }
        let st = self.issue(new_id, rng)?;
        self.registered.insert(new_id, st.pub_key);
        Ok(st)
    }

    pub fn is_registered(&self, id: &DeviceId) -> bool {
        self.registered.contains_key(id)
    }
}

impl DasDeviceState {
    /// c·P == Pub_TA + h(ID ‖ A)·A
    pub fn certificate_holds(&self) -> bool {
        verify_certificate(&self.params, &self.id, &self.a, &self.c).unwrap_or(false)
    }
}

pub fn verify_certificate(params: &DasParams, id: &DeviceId, a: &Point, c: &Scalar) -> Result<bool, DasError> {
    let u = point_add(&params.pub_ta, &scalar_mult(&cert_hash(id, a)?, a));
    Ok(bool::from(subtle::ConstantTimeEq::ct_eq(&u, &scalar_mult_base(c))))
}

/// Shared receiver check for the first and second message.
#[allow(clippy::too_many_arguments)]
fn verify_peer(
    params: &DasParams,
    id: &DeviceId,
    a: &Point,
    c: &Scalar,
    z: &Scalar,
    pub_key: &Point,
    r: &Point,
    ts: Timestamp,
    now: Timestamp,
    window: u64,
) -> Result<DasVerdict, DasError> {
    let mut v = DasVerdict {
        fresh: fresh(ts, now, window),
        ..Default::default()
    };
    if !v.fresh {
        return Ok(v);
    }
    let e = cert_hash(id, a)?;
    let u = point_add(&params.pub_ta, &scalar_mult(&e, a));
    let cp = scalar_mult_base(c);
    v.certificate = bool::from(subtle::ConstantTimeEq::ct_eq(&u, &cp));
    let h = sig_hash(a, c, r, pub_key, ts)?;
    let w = point_add(&cp, &scalar_mult(&h, &point_add(r, pub_key)));
    v.signature = bool::from(subtle::ConstantTimeEq::ct_eq(&w, &scalar_mult_base(z)));
    Ok(v)
}

/// z = c + h(A ‖ c ‖ R ‖ Pub ‖ TS)·(r + Pr)
pub fn sign(st: &DasDeviceState, r: &Scalar, r_point: &Point, ts: Timestamp) -> Result<Scalar, DasError> {
    let h = sig_hash(&st.a, &st.c, r_point, &st.pub_key, ts)?;
    Ok(st.c.checked_add(&h.checked_mul(&r.checked_add(&st.pr)?)?)?)
}

/// Secret kept by the initiator between the first and third message.
#[derive(Debug, Clone)]
pub struct DasInitiatorPending {
    pub r: Scalar,
    pub ts_x: Timestamp,
}

/// Responder state until the third message arrives.
#[derive(Debug, Clone)]
pub struct DasResponderPending {
    pub sk: Digest,
    pub peer: DeviceId,
    /// Ephemeral r_y.
    pub r: Scalar,
}

pub fn das_msg1<R: RngCore + CryptoRng>(
    dx: &DasDeviceState,
    now: Timestamp,
    rng: &mut R,
) -> Result<(DasMsg1, DasInitiatorPending), DasError> {
    let r = random_scalar(rng)?;
    let r_point = scalar_mult_base(&r);
    let z = sign(dx, &r, &r_point, now)?;
    Ok((
        DasMsg1 {
            ts_x: now,
            id_x: dx.id,
            c_x: dx.c.clone(),
            z_x: z,
            a_x: dx.a,
            pub_x: dx.pub_key,
            r_x: r_point,
        },
        DasInitiatorPending { r, ts_x: now },
    ))
}

/// The receiver's checks on a first message, without answering.
pub fn das_verify_msg1(dy: &DasDeviceState, m1: &DasMsg1, now: Timestamp, window: u64) -> Result<DasVerdict, DasError> {
    verify_peer(&dy.params, &m1.id_x, &m1.a_x, &m1.c_x, &m1.z_x, &m1.pub_x, &m1.r_x, m1.ts_x, now, window)
}

pub fn das_msg2<R: RngCore + CryptoRng>(
    dy: &DasDeviceState,
    m1: &DasMsg1,
    now: Timestamp,
    window: u64,
    rng: &mut R,
) -> Result<(DasMsg2, DasResponderPending), DasError> {
    das_verify_msg1(dy, m1, now, window)?.into_result()?;
    let r = random_scalar(rng)?;
    let r_point = scalar_mult_base(&r);
    let ts_y = now;
    let z = sign(dy, &r, &r_point, ts_y)?;
    let k = scalar_mult(&dy.pr, &m1.pub_x);
    let b = scalar_mult(&r, &m1.r_x);
    let sk = session_key(&b, &k, ts_y, m1.ts_x, &m1.id_x, &dy.id);
    Ok((
        DasMsg2 {
            id_y: dy.id,
            ts_y,
            a_y: dy.a,
            c_y: dy.c.clone(),
            z_y: z,
            skv: skv(&sk, ts_y),
            pub_y: dy.pub_key,
            r_y: r_point,
        },
        DasResponderPending { sk, peer: m1.id_x, r },
    ))
}

pub fn das_msg3(
    dx: &DasDeviceState,
    pending: &DasInitiatorPending,
    m2: &DasMsg2,
    now: Timestamp,
    window: u64,
) -> Result<(DasMsg3, Digest), DasError> {
    verify_peer(&dx.params, &m2.id_y, &m2.a_y, &m2.c_y, &m2.z_y, &m2.pub_y, &m2.r_y, m2.ts_y, now, window)?
        .into_result()?;
    let k = scalar_mult(&dx.pr, &m2.pub_y);
    let b = scalar_mult(&pending.r, &m2.r_y);
    let sk = session_key(&b, &k, m2.ts_y, pending.ts_x, &dx.id, &m2.id_y);
    if !skv(&sk, m2.ts_y).verify(&m2.skv) {
        return Err(DasError::Skv);
    }
    let ts = now;
    Ok((DasMsg3 { skv: skv(&sk, ts), ts_x: ts }, sk))
}

pub fn das_msg3_verify(pending: &DasResponderPending, m3: &DasMsg3, now: Timestamp, window: u64) -> Result<Digest, DasError> {
    if !fresh(m3.ts_x, now, window) {
        return Err(DasError::Stale);
    }
    if !skv(&pending.sk, m3.ts_x).verify(&m3.skv) {
        return Err(DasError::Skv);
    }
    Ok(pending.sk)
}

/// A Das device with per-correlation state, for running over a broker.
pub struct DasDevice {
    pub state: DasDeviceState,
    pub window: u64,
    initiated: HashMap<crate::id::CorrelationId, DasInitiatorPending>,
    responding: HashMap<crate::id::CorrelationId, DasResponderPending>,
    /// Full first-message verifications performed.
    pub verifications: u64,
}

impl DasDevice {
    pub fn new(state: DasDeviceState, window: u64) -> DasDevice {
        DasDevice {
            state,
            window,
            initiated: HashMap::new(),
            responding: HashMap::new(),
            verifications: 0,
        }
    }

    /// Key the responder holds for `correlation` while awaiting the third message.
    pub fn responder_key(&self, correlation: &crate::id::CorrelationId) -> Option<Digest> {
        self.responding.get(correlation).map(|p| p.sk)
    }

    pub fn start<R: RngCore + CryptoRng>(
        &mut self,
        correlation: crate::id::CorrelationId,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<DasMsg1, DasError> {
        let (m1, p) = das_msg1(&self.state, now, rng)?;
        self.initiated.insert(correlation, p);
        Ok(m1)
    }

    pub fn respond<R: RngCore + CryptoRng>(
        &mut self,
        correlation: crate::id::CorrelationId,
        m1: &DasMsg1,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<DasMsg2, DasError> {
        self.verifications += 1;
        let (m2, p) = das_msg2(&self.state, m1, now, self.window, rng)?;
        self.responding.insert(correlation, p);
        Ok(m2)
    }

    pub fn finish(
        &mut self,
        correlation: crate::id::CorrelationId,
        m2: &DasMsg2,
        now: Timestamp,
    ) -> Result<(DasMsg3, Digest), DasError> {
        let p = self.initiated.get(&correlation).ok_or(DasError::Unknown)?;
        let out = das_msg3(&self.state, p, m2, now, self.window)?;
        self.initiated.remove(&correlation);
        Ok(out)
    }

    pub fn confirm(&mut self, correlation: crate::id::CorrelationId, m3: &DasMsg3, now: Timestamp) -> Result<(Digest, DeviceId), DasError> {
        let p = self.responding.get(&correlation).ok_or(DasError::Unknown)?;
        let sk = das_msg3_verify(p, m3, now, self.window)?;
        let peer = p.peer;
        self.responding.remove(&correlation);
        Ok((sk, peer))
    }
}

fn scalar_field(r: &mut FieldReader) -> Result<Scalar, CodecError> {
    Scalar::from_bytes(&r.scalar()?).map_err(|_| CodecError::InvalidValue("scalar out of range"))
}

fn point_field(r: &mut FieldReader) -> Result<Point, CodecError> {
    Point::from_compressed(&r.point()?).map_err(|_| CodecError::InvalidValue("point not on curve"))
}

impl WireMessage for DasMsg1 {
    const TYPE: MsgType = MsgType::DasM1;

    fn fields(&self) -> Vec<Field> {
        vec![
            Field::Timestamp(self.ts_x),
            Field::Id(self.id_x.0),
            Field::Scalar(self.c_x.to_bytes()),
            Field::Scalar(self.z_x.to_bytes()),
            Field::Point(self.a_x.to_compressed()),
            Field::Point(self.pub_x.to_compressed()),
            Field::Point(self.r_x.to_compressed()),
        ]
    }

    fn read(mut r: FieldReader) -> Result<Self, CodecError> {
        let m = DasMsg1 {
            ts_x: r.timestamp()?,
            id_x: r.id()?,
            c_x: scalar_field(&mut r)?,
            z_x: scalar_field(&mut r)?,
            a_x: point_field(&mut r)?,
            pub_x: point_field(&mut r)?,
            r_x: point_field(&mut r)?,
        };
        r.finish()?;
        Ok(m)
    }
}

impl WireMessage for DasMsg2 {
    const TYPE: MsgType = MsgType::DasM2;

    fn fields(&self) -> Vec<Field> {
        vec![
            Field::Id(self.id_y.0),
            Field::Timestamp(self.ts_y),
            Field::Point(self.a_y.to_compressed()),
            Field::Scalar(self.c_y.to_bytes()),
            Field::Scalar(self.z_y.to_bytes()),
            Field::Digest(self.skv.0),
            Field::Point(self.pub_y.to_compressed()),
            Field::Point(self.r_y.to_compressed()),
        ]
    }

    fn read(mut r: FieldReader) -> Result<Self, CodecError> {
        let m = DasMsg2 {
            id_y: r.id()?,
            ts_y: r.timestamp()?,
            a_y: point_field(&mut r)?,
            c_y: scalar_field(&mut r)?,
            z_y: scalar_field(&mut r)?,
            skv: Digest(r.digest()?),
            pub_y: point_field(&mut r)?,
            r_y: point_field(&mut r)?,
        };
        r.finish()?;
        Ok(m)
    }
}

impl WireMessage for DasMsg3 {
    const TYPE: MsgType = MsgType::DasM3;

    fn fields(&self) -> Vec<Field> {
        vec![Field::Digest(self.skv.0), Field::Timestamp(self.ts_x)]
    }

    fn read(mut r: FieldReader) -> Result<Self, CodecError> {
        let m = DasMsg3 {
            skv: Digest(r.digest()?),
            ts_x: r.timestamp()?,
        };
        r.finish()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const WINDOW: u64 = 5_000;

    fn setup() -> (DasAuthority, DasDeviceState, DasDeviceState, ChaCha20Rng) {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut ta = DasAuthority::setup(&mut rng).unwrap();
        let x = ta.register(DeviceId([1; 16]), &mut rng).unwrap();
        let y = ta.register(DeviceId([2; 16]), &mut rng).unwrap();
        (ta, x, y, rng)
    }

    #[test]
    fn honest_chain_agrees() {
        let (_, x, y, mut rng) = setup();
        let (m1, px) = das_msg1(&x, 1000, &mut rng).unwrap();
        let (m2, py) = das_msg2(&y, &m1, 1001, WINDOW, &mut rng).unwrap();
        let (m3, sk_x) = das_msg3(&x, &px, &m2, 1002, WINDOW).unwrap();
        let sk_y = das_msg3_verify(&py, &m3, 1003, WINDOW).unwrap();
        assert_eq!(sk_x, sk_y);
    }

    #[test]
    fn certificate_and_tamper() {
        let (_, x, _, _) = setup();
        assert!(x.certificate_holds());
        let mut bad = x.clone();
        bad.a = point_add(&bad.a, &Point::generator());
        assert!(!bad.certificate_holds());
    }

    #[test]
    fn stale_and_duplicate() {
        let (mut ta, x, y, mut rng) = setup();
        let (m1, _) = das_msg1(&x, 0, &mut rng).unwrap();
        assert_eq!(das_msg2(&y, &m1, WINDOW + 1, WINDOW, &mut rng).unwrap_err(), DasError::Stale);
        assert_eq!(ta.register(x.id, &mut rng).unwrap_err(), DasError::Duplicate);
    }

    #[test]
    fn replacement_passes_certificate() {
        let (mut ta, x, _, mut rng) = setup();
        let nx = ta.replace_device(&x.id, DeviceId([9; 16]), &mut rng).unwrap();
        assert!(nx.certificate_holds());
        assert!(!ta.is_registered(&x.id));
    }

    #[test]
    fn z_algebra() {
        let (_, x, _, mut rng) = setup();
        let (m1, _) = das_msg1(&x, 5, &mut rng).unwrap();
        let h = sig_hash(&m1.a_x, &m1.c_x, &m1.r_x, &m1.pub_x, m1.ts_x).unwrap();
        let rhs = point_add(&scalar_mult_base(&m1.c_x), &scalar_mult(&h, &point_add(&m1.r_x, &m1.pub_x)));
        assert_eq!(scalar_mult_base(&m1.z_x), rhs);
        let mut z2 = m1.clone();
        z2.z_x = z2.z_x.checked_add(&Scalar::one()).unwrap();
        assert!(!das_verify_msg1(&x, &z2, 5, WINDOW).unwrap().signature);
    }

    #[test]
    fn wrong_skv_rejected() {
        let (_, x, y, mut rng) = setup();
        let (m1, px) = das_msg1(&x, 1000, &mut rng).unwrap();
        let (mut m2, _) = das_msg2(&y, &m1, 1000, WINDOW, &mut rng).unwrap();
        m2.skv.0[0] ^= 1;
        assert_eq!(das_msg3(&x, &px, &m2, 1000, WINDOW).unwrap_err(), DasError::Skv);
    }

    #[test]
    fn messages_roundtrip() {
        let (_, x, y, mut rng) = setup();
        let (m1, _) = das_msg1(&x, 1, &mut rng).unwrap();
        let (m2, _) = das_msg2(&y, &m1, 1, WINDOW, &mut rng).unwrap();
        assert_eq!(DasMsg1::from_payload(&m1.to_payload()).unwrap(), m1);
        assert_eq!(DasMsg2::from_payload(&m2.to_payload()).unwrap(), m2);
        let m3 = DasMsg3 { skv: Digest([3; 32]), ts_x: 9 };
        assert_eq!(DasMsg3::from_payload(&m3.to_payload()).unwrap(), m3);
    }
}
