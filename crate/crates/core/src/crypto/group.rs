//! NIST P-256 group arithmetic behind domain newtypes.
//!
//! [`Point`] values are always on the curve (or the identity): every
//! constructor validates, so the arithmetic entry points never see an
//! off-curve operand.

use std::fmt;

use p256::elliptic_curve::group::prime::PrimeCurveAffine;
use p256::elliptic_curve::group::Group;
use p256::elliptic_curve::ops::Reduce;
use p256::elliptic_curve::point::AffineCoordinates;
use p256::elliptic_curve::sec1::{FromEncodedPoint, ToEncodedPoint};
use p256::elliptic_curve::PrimeField;
use p256::{AffinePoint, EncodedPoint, FieldBytes, FieldElement, NonZeroScalar, ProjectivePoint, U256};
use subtle::ConstantTimeEq;

use super::counters::{bump, Op};
use super::CryptoError;

pub const SCALAR_LEN: usize = 32;
pub const POINT_LEN: usize = 33;

/// Domain parameters of a short Weierstrass curve `y² = x³ + a·x + b` over F_p.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CurveParams {
    pub name: &'static str,
    pub prime: [u8; 32],
    pub a: [u8; 32],
    pub b: [u8; 32],
    pub base_x: [u8; 32],
    pub base_y: [u8; 32],
    pub order: [u8; 32],
    pub cofactor: u8,
}

const fn hex32(s: &str) -> [u8; 32] {
    let b = s.as_bytes();
    let mut out = [0u8; 32];
    let mut i = 0;
    while i < 32 {
        out[i] = (nibble(b[2 * i]) << 4) | nibble(b[2 * i + 1]);
        i += 1;
    }
    out
}

const fn nibble(c: u8) -> u8 {
    match c {
        b'0'..=b'9' => c - b'0',
        b'a'..=b'f' => c - b'a' + 10,
        b'A'..=b'F' => c - b'A' + 10,
        _ => panic!("bad hex digit"),
    }
}

/// FIPS 186-4 curve P-256 (secp256r1).
pub const P256: CurveParams = CurveParams {
    name: "P-256",
    prime: hex32("ffffffff00000001000000000000000000000000ffffffffffffffffffffffff"),
    a: hex32("ffffffff00000001000000000000000000000000fffffffffffffffffffffffc"),
    b: hex32("5ac635d8aa3a93e7b3ebbd55769886bc651d06b0cc53b0f63bce3c3e27d2604b"),
    base_x: hex32("6b17d1f2e12c4247f8bce6e563a440f277037d812deb33a0f4a13945d898c296"),
    base_y: hex32("4fe342e2fe1a7f9b8ee7eb4a7c0f9e162bce33576b315ececbb6406837bf51f5"),
    order: hex32("ffffffff00000000ffffffffffffffffbce6faada7179e84f3b9cac2fc632551"),
    cofactor: 1,
};

impl CurveParams {
    /// Look a supported curve up by name.
    pub fn by_name(name: &str) -> Option<CurveParams> {
        match name.to_ascii_lowercase().as_str() {
            "p-256" | "p256" | "secp256r1" | "prime256v1" => Some(P256),
            _ => None,
        }
    }

    /// Check nondegeneracy (4a³ + 27b² ≠ 0), that the base point is on the
    /// curve and that `order · base = O`.
    pub fn validate(&self) -> Result<(), CryptoError> {
        if *self != P256 {
            return Err(CryptoError::UnsupportedCurve);
        }
        let fe = |b: &[u8; 32]| {
            Option::<FieldElement>::from(FieldElement::from_bytes(&FieldBytes::from(*b)))
                .ok_or(CryptoError::UnsupportedCurve)
        };
        let (a, b) = (fe(&self.a)?, fe(&self.b)?);
        let four = FieldElement::from_u64(4);
        let twenty_seven = FieldElement::from_u64(27);
        let disc = four * a.square() * a + twenty_seven * b.square();
        if bool::from(disc.is_zero()) {
            return Err(CryptoError::UnsupportedCurve);
        }
        let base = Point::from_coordinates(&self.base_x, &self.base_y)?;
        if base != Point::generator() {
            return Err(CryptoError::UnsupportedCurve);
        }
        // order·P computed as (order − 1)·P + P since a reduced scalar cannot hold `order`.
        let n_minus_1 = Scalar::minus_one();
        let sum = ProjectivePoint::from(base.0) * *n_minus_1.0 + ProjectivePoint::from(base.0);
        if !bool::from(sum.is_identity()) {
            return Err(CryptoError::UnsupportedCurve);
        }
        Ok(())
    }
}

/// Nonzero scalar modulo the group order.
#[derive(Clone, Copy)]
pub struct Scalar(pub(crate) NonZeroScalar);

impl Scalar {
    /// Parse 32 big-endian bytes; rejects zero and values ≥ n.
    pub fn from_bytes(bytes: &[u8]) -> Result<Scalar, CryptoError> {
        if bytes.len() != SCALAR_LEN {
            return Err(CryptoError::InvalidScalar);
        }
        let arr: [u8; SCALAR_LEN] = bytes.try_into().map_err(|_| CryptoError::InvalidScalar)?;
        let repr = FieldBytes::from(arr);
        let s: Option<p256::Scalar> = p256::Scalar::from_repr(repr).into();
        Self::from_inner(s.ok_or(CryptoError::InvalidScalar)?).map_err(|_| CryptoError::InvalidScalar)
    }

    pub fn from_u64(v: u64) -> Result<Scalar, CryptoError> {
        Self::from_inner(p256::Scalar::from(v))
    }

    /// Reduce a 32-byte big-endian value modulo n.
    pub fn reduce_bytes(bytes: &[u8; 32]) -> Result<Scalar, CryptoError> {
        let s = <p256::Scalar as Reduce<U256>>::reduce_bytes(&FieldBytes::from(*bytes));
        Self::from_inner(s)
    }

    pub fn one() -> Scalar {
        Scalar(NonZeroScalar::new(p256::Scalar::ONE).unwrap())
    }

    /// n − 1.
    pub fn minus_one() -> Scalar {
        Scalar(NonZeroScalar::new(-p256::Scalar::ONE).unwrap())
    }

    pub(crate) fn from_inner(s: p256::Scalar) -> Result<Scalar, CryptoError> {
        Option::from(NonZeroScalar::new(s))
            .map(Scalar)
            .ok_or(CryptoError::ZeroScalar)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_repr().into()
    }

    pub fn checked_add(&self, other: &Scalar) -> Result<Scalar, CryptoError> {
        Self::from_inner(*self.0 + *other.0)
    }

    pub fn checked_mul(&self, other: &Scalar) -> Result<Scalar, CryptoError> {
        Self::from_inner(*self.0 * *other.0)
    }
}

impl PartialEq for Scalar {
    fn eq(&self, other: &Scalar) -> bool {
        bool::from(self.0.ct_eq(&other.0))
    }
}

impl Eq for Scalar {}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Scalar(..)")
    }
}

/// Affine curve point or the point at infinity.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Point(pub(crate) AffinePoint);

impl Point {
    pub fn generator() -> Point {
        Point(AffinePoint::generator())
    }

    pub fn identity() -> Point {
        Point(AffinePoint::identity())
    }

    pub fn is_identity(&self) -> bool {
        bool::from(self.0.is_identity())
    }

    /// Build from big-endian affine coordinates, rejecting points off the curve.
    pub fn from_coordinates(x: &[u8; 32], y: &[u8; 32]) -> Result<Point, CryptoError> {
        let ep = EncodedPoint::from_affine_coordinates(x.into(), y.into(), false);
        Option::from(AffinePoint::from_encoded_point(&ep))
            .map(Point)
            .ok_or(CryptoError::InvalidPoint)
    }

    /// Parse a 33-byte compressed encoding (0x02/0x03 ‖ x). The identity has
    /// no compressed form and is rejected along with off-curve x values.
    pub fn from_compressed(bytes: &[u8]) -> Result<Point, CryptoError> {
        if bytes.len() != POINT_LEN || !(bytes[0] == 0x02 || bytes[0] == 0x03) {
            return Err(CryptoError::InvalidPoint);
        }
        let ep = EncodedPoint::from_bytes(bytes).map_err(|_| CryptoError::InvalidPoint)?;
        Option::from(AffinePoint::from_encoded_point(&ep))
            .map(Point)
            .ok_or(CryptoError::InvalidPoint)
    }

    /// Compressed encoding. The identity encodes as 33 zero bytes, which
    /// [`Point::from_compressed`] refuses.
    pub fn to_compressed(&self) -> [u8; 33] {
        let mut out = [0u8; 33];
        if !self.is_identity() {
            out.copy_from_slice(self.0.to_encoded_point(true).as_bytes());
        }
        out
    }

    /// Big-endian affine coordinates, `None` for the identity.
    pub fn coordinates(&self) -> Option<([u8; 32], [u8; 32])> {
        if self.is_identity() {
            return None;
        }
        let ep = self.0.to_encoded_point(false);
        let mut x = [0u8; 32];
        let mut y = [0u8; 32];
        x.copy_from_slice(ep.x()?);
        y.copy_from_slice(ep.y()?);
        Some((x, y))
    }

    pub(crate) fn x_bytes(&self) -> [u8; 32] {
        self.0.x().into()
    }

    pub fn negate(&self) -> Point {
        Point((-ProjectivePoint::from(self.0)).to_affine())
    }

    pub(crate) fn projective(&self) -> ProjectivePoint {
        ProjectivePoint::from(self.0)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            f.write_str("Point(O)")
        } else {
            write!(f, "Point({})", hex::encode(self.to_compressed()))
        }
    }
}

impl ConstantTimeEq for Point {
    fn ct_eq(&self, other: &Self) -> subtle::Choice {
        self.0.ct_eq(&other.0)
    }
}

/// `k · q` by the group law. Constant time in `k`.
pub fn scalar_mult(k: &Scalar, q: &Point) -> Point {
    bump(Op::PointMul);
    Point((q.projective() * *k.0).to_affine())
}

/// `k · P` for the base point.
pub fn scalar_mult_base(k: &Scalar) -> Point {
    scalar_mult(k, &Point::generator())
}

/// Group-law sum, including doubling and inverse/identity cases.
pub fn point_add(a: &Point, b: &Point) -> Point {
    bump(Op::PointAdd);
    Point((a.projective() + b.projective()).to_affine())
}

pub(crate) fn mul_uncounted(k: &Scalar, q: &Point) -> Point {
    Point((q.projective() * *k.0).to_affine())
}

impl serde::Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> serde::Deserialize<'de> for Scalar {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Scalar, D::Error> {
        use serde::de::Error;
        let s = String::deserialize(d)?;
        let b = hex::decode(&s).map_err(D::Error::custom)?;
        Scalar::from_bytes(&b).map_err(D::Error::custom)
    }
}

impl serde::Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_compressed()))
    }
}

impl<'de> serde::Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Point, D::Error> {
        use serde::de::Error;
        let s = String::deserialize(d)?;
        let b = hex::decode(&s).map_err(D::Error::custom)?;
        Point::from_compressed(&b).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_params_validate() {
        P256.validate().unwrap();
        assert!(CurveParams::by_name("secp256r1").is_some());
        assert!(CurveParams::by_name("curve25519").is_none());
    }

    #[test]
    fn degenerate_params_rejected() {
        let mut bad = P256;
        bad.b = [0u8; 32];
        assert!(bad.validate().is_err());
    }

    #[test]
    fn scalar_rejects_zero_and_order() {
        assert_eq!(Scalar::from_bytes(&[0u8; 32]), Err(CryptoError::InvalidScalar));
        assert_eq!(Scalar::from_bytes(&P256.order), Err(CryptoError::InvalidScalar));
        assert_eq!(Scalar::from_bytes(&[1u8; 31]), Err(CryptoError::InvalidScalar));
        let one = Scalar::from_bytes(&{
            let mut b = [0u8; 32];
            b[31] = 1;
            b
        })
        .unwrap();
        assert_eq!(one, Scalar::one());
    }

    #[test]
    fn identity_cases() {
        let p = Point::generator();
        assert_eq!(point_add(&p, &Point::identity()), p);
        assert_eq!(point_add(&Point::identity(), &p), p);
        assert!(point_add(&p, &p.negate()).is_identity());
        assert_eq!(scalar_mult(&Scalar::one(), &p), p);
        assert_eq!(scalar_mult(&Scalar::from_u64(2).unwrap(), &p), point_add(&p, &p));
    }

    #[test]
    fn compressed_encoding_rules() {
        let p = scalar_mult_base(&Scalar::from_u64(7).unwrap());
        let enc = p.to_compressed();
        assert!(enc[0] == 0x02 || enc[0] == 0x03);
        assert_eq!(Point::from_compressed(&enc).unwrap(), p);
        assert_eq!(Point::identity().to_compressed(), [0u8; 33]);
        assert!(Point::from_compressed(&[0u8; 33]).is_err());
        assert!(Point::from_compressed(&enc[..32]).is_err());
        let mut bad = enc;
        bad[0] = 0x04;
        assert!(Point::from_compressed(&bad).is_err());
        // x = 0 has no square root on P-256's right-hand side? Find an off-curve x.
        let mut off = [0u8; 33];
        off[0] = 0x02;
        let rejected = (0u8..=255).any(|v| {
            off[32] = v;
            Point::from_compressed(&off).is_err()
        });
        assert!(rejected);
    }

    #[test]
    fn off_curve_coordinates_rejected() {
        let (x, mut y) = Point::generator().coordinates().unwrap();
        y[31] ^= 1;
        assert_eq!(Point::from_coordinates(&x, &y), Err(CryptoError::InvalidPoint));
    }
}
