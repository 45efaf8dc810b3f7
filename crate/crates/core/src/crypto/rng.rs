//! Randomness. Entropy failures surface as errors; there is no fallback source.

use rand::{CryptoRng, RngCore};

use super::group::{Scalar, SCALAR_LEN};
use super::CryptoError;

/// Nonce width used for N_d values.
pub const NONCE_LEN: usize = 16;

pub(crate) fn fill<R: RngCore + CryptoRng>(rng: &mut R, buf: &mut [u8]) -> Result<(), CryptoError> {
    rng.try_fill_bytes(buf).map_err(|e| CryptoError::Entropy(e.to_string()))
}

/// Uniform scalar in [1, n−1] by rejection sampling.
pub fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Result<Scalar, CryptoError> {
    let mut buf = [0u8; SCALAR_LEN];
    loop {
        fill(rng, &mut buf)?;
        if let Ok(s) = Scalar::from_bytes(&buf) {
            return Ok(s);
        }
    }
}

pub fn random_nonce<R: RngCore + CryptoRng>(rng: &mut R, len: usize) -> Result<Vec<u8>, CryptoError> {
    let mut v = vec![0u8; len];
    fill(rng, &mut v)?;
    Ok(v)
}

pub fn random_array<const N: usize, R: RngCore + CryptoRng>(rng: &mut R) -> Result<[u8; N], CryptoError> {
    let mut v = [0u8; N];
    fill(rng, &mut v)?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::collections::HashSet;

    struct Broken;

    impl RngCore for Broken {
        fn next_u32(&mut self) -> u32 {
            unreachable!()
        }
        fn next_u64(&mut self) -> u64 {
            unreachable!()
        }
        fn fill_bytes(&mut self, _: &mut [u8]) {
            unreachable!()
        }
        fn try_fill_bytes(&mut self, _: &mut [u8]) -> Result<(), rand::Error> {
            Err(rand::Error::new("no entropy"))
        }
    }
    impl CryptoRng for Broken {}

    #[test]
    fn no_repeats_over_ten_thousand_draws() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
        let mut nonces = HashSet::new();
        let mut scalars = HashSet::new();
        for _ in 0..10_000 {
            let n = random_nonce(&mut rng, NONCE_LEN).unwrap();
            assert_eq!(n.len(), NONCE_LEN);
            assert!(nonces.insert(n));
            assert!(scalars.insert(random_scalar(&mut rng).unwrap().to_bytes()));
        }
    }

    #[test]
    fn nonce_length_respected() {
        let mut rng = rand::rngs::OsRng;
        for len in [0, 1, 16, 100] {
            assert_eq!(random_nonce(&mut rng, len).unwrap().len(), len);
        }
    }

    #[test]
    fn entropy_failure_is_an_error() {
        assert!(matches!(random_scalar(&mut Broken), Err(CryptoError::Entropy(_))));
        assert!(matches!(random_nonce(&mut Broken, 16), Err(CryptoError::Entropy(_))));
    }
}
