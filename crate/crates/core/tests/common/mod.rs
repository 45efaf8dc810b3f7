//! Independent affine arithmetic on P-256 over arbitrary-precision integers.
#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{One, Zero};

pub struct Curve {
    pub p: BigUint,
    pub a: BigUint,
    pub gx: BigUint,
    pub gy: BigUint,
}

fn hex(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).expect("hex literal")
}

pub fn p256() -> Curve {
    let p = hex("FFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF");
    Curve {
        a: &p - 3u32,
        gx: hex("6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296"),
        gy: hex("4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5"),
        p,
    }
}

pub type Affine = Option<(BigUint, BigUint)>;

impl Curve {
    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        ((a + &self.p) - (b % &self.p)) % &self.p
    }

    fn inv(&self, a: &BigUint) -> BigUint {
        a.modpow(&(&self.p - 2u32), &self.p)
    }

    pub fn add(&self, u: &Affine, v: &Affine) -> Affine {
        let (Some((x1, y1)), Some((x2, y2))) = (u, v) else {
            return u.clone().or_else(|| v.clone());
        };
        let p = &self.p;
        let lambda = if x1 == x2 {
            if (y1 + y2) % p == BigUint::zero() {
                return None;
            }
            let num = (BigUint::from(3u32) * x1 * x1 + &self.a) % p;
            num * self.inv(&((BigUint::from(2u32) * y1) % p)) % p
        } else {
            self.sub(y2, y1) * self.inv(&self.sub(x2, x1)) % p
        };
        let x3 = self.sub(&self.sub(&(&lambda * &lambda % p), x1), x2);
        let y3 = self.sub(&(&lambda * self.sub(x1, &x3) % p), y1);
        Some((x3, y3))
    }

    /// Left-to-right double-and-add.
    pub fn mul(&self, k: &BigUint, q: &Affine) -> Affine {
        let mut acc: Affine = None;
        for i in (0..k.bits()).rev() {
            acc = self.add(&acc, &acc);
            if k.bit(i) {
                acc = self.add(&acc, q);
            }
        }
        acc
    }

    /// k·G by repeated addition, for small k.
    pub fn mul_by_addition(&self, k: u64) -> Affine {
        let g = self.generator();
        let mut acc: Affine = None;
        for _ in 0..k {
            acc = self.add(&acc, &g);
        }
        acc
    }

    pub fn generator(&self) -> Affine {
        Some((self.gx.clone(), self.gy.clone()))
    }

    pub fn on_curve(&self, pt: &Affine) -> bool {
        let Some((x, y)) = pt else { return true };
        let p = &self.p;
        let lhs = y * y % p;
        let b = hex("5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B");
        let rhs = (x * x % p * x + &self.a * x + b) % p;
        lhs == rhs
    }
}

pub fn to_bytes32(v: &BigUint) -> [u8; 32] {
    let b = v.to_bytes_be();
    let mut out = [0u8; 32];
    out[32 - b.len()..].copy_from_slice(&b);
    out
}

pub fn one() -> BigUint {
    BigUint::one()
}
