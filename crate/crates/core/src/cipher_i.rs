//! Involutive SUC class.
//!
//! Thirty-two applications of one fixed layer of 16 involutive optimal
//! S-boxes, separated by the XOR-sum diffusion layer and a round key. Round
//! keys have nibble-XOR zero, which makes key addition commute with the
//! diffusion layer, and they are read in palindromic order, so the whole
//! cipher is its own inverse.

use crate::cipher_ni::{flip, CipherError, SubstitutionLayer};
use crate::sbox::SBox4;
use crate::trng::Trng;

/// Number of substitution layers.
pub const I_LAYERS: usize = 32;
pub const I_ROUND_KEYS: usize = I_LAYERS - 1;
pub const I_KEY_LUTS: usize = 60;

const NIBBLE_ONES: u64 = 0x1111_1111_1111_1111;

/// A fully materialized I-SUC instance.
///
/// `key_luts[j]` holds key bit `4 + j` (nibbles 1 to 15): its bit `c` is
/// that bit of stored key `c`. Nibble 0 of every key is derived as the XOR
/// of the other fifteen.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ISucSpec {
    layer: SubstitutionLayer,
    key_luts: [u16; I_KEY_LUTS],
    round_keys: [u64; I_ROUND_KEYS],
}

impl ISucSpec {
    pub fn new(sboxes: [SBox4; 16], key_luts: [u16; I_KEY_LUTS]) -> Result<Self, CipherError> {
        for (i, s) in sboxes.iter().enumerate() {
            if !s.is_involution() {
                return Err(CipherError::NotInvolution(i));
            }
            if !s.is_optimal() {
                return Err(CipherError::NotOptimal(i));
            }
        }
        Self::new_unchecked_optimality(sboxes, key_luts)
    }

    /// Checks only that every S-box is an involution.
    pub fn new_unchecked_optimality(
        sboxes: [SBox4; 16],
        key_luts: [u16; I_KEY_LUTS],
    ) -> Result<Self, CipherError> {
        if let Some(i) = sboxes.iter().position(|s| !s.is_involution()) {
            return Err(CipherError::NotInvolution(i));
        }
        let round_keys = std::array::from_fn(|r| stored_key(&key_luts, i_counter(r)));
        Ok(ISucSpec {
            layer: SubstitutionLayer::new(sboxes),
            key_luts,
            round_keys,
        })
    }

    pub fn sboxes(&self) -> &[SBox4; 16] {
        self.layer.sboxes()
    }

    pub fn key_luts(&self) -> &[u16; I_KEY_LUTS] {
        &self.key_luts
    }

    pub fn round_key(&self, r: usize) -> Result<u64, CipherError> {
        self.round_keys
            .get(r)
            .copied()
            .ok_or(CipherError::IndexOutOfRange {
                index: r,
                bound: I_ROUND_KEYS,
            })
    }

    /// Encryption and decryption alike.
    pub fn apply(&self, x: u64) -> u64 {
        let mut state = self.layer.apply(x);
        for k in &self.round_keys {
            state = self.layer.apply(diffuse(state) ^ k);
        }
        state
    }

    /// Hamming distance between the evaluations on `x` and on `x` with
    /// `flip_bit` toggled, after each of the 32 substitution layers.
    pub fn trace(&self, x: u64, flip_bit: Option<u32>) -> Result<[u32; I_LAYERS], CipherError> {
        let mut a = x;
        let mut b = flip(x, flip_bit)?;
        let mut out = [0u32; I_LAYERS];
        a = self.layer.apply(a);
        b = self.layer.apply(b);
        out[0] = (a ^ b).count_ones();
        for (r, k) in self.round_keys.iter().enumerate() {
            a = self.layer.apply(diffuse(a) ^ k);
            b = self.layer.apply(diffuse(b) ^ k);
            out[r + 1] = (a ^ b).count_ones();
        }
        Ok(out)
    }
}

/// Palindromic counter for the 31 round keys: `min(r, 30 − r)`.
pub fn i_counter(r: usize) -> usize {
    r.min(I_ROUND_KEYS - 1 - r)
}

fn stored_key(luts: &[u16; I_KEY_LUTS], c: usize) -> u64 {
    let upper = luts
        .iter()
        .enumerate()
        .fold(0u64, |k, (j, &lut)| k | (u64::from((lut >> c) & 1) << (4 + j)));
    upper | nibble_xor(upper)
}

/// XOR of the 16 nibbles of `x`.
#[inline]
pub fn nibble_xor(x: u64) -> u64 {
    let x = x ^ (x >> 32);
    let x = x ^ (x >> 16);
    let x = x ^ (x >> 8);
    (x ^ (x >> 4)) & 0xf
}

/// Each output nibble is the input nibble XOR the XOR of all input nibbles.
#[inline]
pub fn diffuse(x: u64) -> u64 {
    x ^ (nibble_xor(x) * NIBBLE_ONES)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Commutation {
    Holds,
    /// `diffuse(x ⊕ k) ≠ diffuse(x) ⊕ k` at this `x`.
    Fails { counterexample: u64 },
}

impl Commutation {
    pub fn holds(&self) -> bool {
        matches!(self, Commutation::Holds)
    }
}

/// Tests whether XOR with `k` commutes with [`diffuse`] at `x = 0` and at
/// `samples` random points. When the nibble-XOR of `k` is zero this holds
/// for every `x`.
pub fn check_commutation(k: u64, samples: usize, rng: &mut Trng) -> Commutation {
    let commutes = |x: u64| diffuse(x ^ k) == diffuse(x) ^ k;
    std::iter::once(0)
        .chain((0..samples).map(|_| rng.bits(64)))
        .find(|&x| !commutes(x))
        .map_or(Commutation::Holds, |counterexample| Commutation::Fails {
            counterexample,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    // a linear involution (x ↦ x ⊕ 1); not optimal
    fn xor1() -> SBox4 {
        SBox4::new(std::array::from_fn(|x| (x ^ 1) as u8)).unwrap()
    }

    fn diffuse_oracle(x: u64) -> u64 {
        let nibbles: Vec<u64> = (0..16).map(|i| (x >> (4 * i)) & 0xf).collect();
        let sum = nibbles.iter().fold(0, |a, n| a ^ n);
        nibbles
            .iter()
            .enumerate()
            .fold(0, |y, (i, n)| y | ((n ^ sum) << (4 * i)))
    }

    fn random_luts(rng: &mut Trng) -> [u16; I_KEY_LUTS] {
        std::array::from_fn(|_| rng.bits(16) as u16)
    }

    #[test]
    fn diffuse_examples() {
        assert_eq!(diffuse(0), 0);
        for i in 0..16 {
            for v in 1..16u64 {
                let y = diffuse(v << (4 * i));
                for j in 0..16 {
                    let nib = (y >> (4 * j)) & 0xf;
                    assert_eq!(nib, if j == i { 0 } else { v });
                }
            }
        }
        let mut rng = Trng::from_u64(1);
        for _ in 0..10_000 {
            let x = rng.bits(64);
            assert_eq!(diffuse(x), diffuse_oracle(x));
            assert_eq!(diffuse(diffuse(x)), x);
        }
    }

    #[test]
    fn round_keys_have_zero_nibble_sum() {
        let mut rng = Trng::from_u64(2);
        let spec = ISucSpec::new_unchecked_optimality([xor1(); 16], random_luts(&mut rng)).unwrap();
        for r in 0..I_ROUND_KEYS {
            assert_eq!(nibble_xor(spec.round_key(r).unwrap()), 0);
        }
        assert_eq!(spec.round_key(0), spec.round_key(30));
        assert!(spec.round_key(31).is_err());
        let zero = ISucSpec::new_unchecked_optimality([xor1(); 16], [0; 60]).unwrap();
        assert!((0..31).all(|r| zero.round_key(r).unwrap() == 0));
    }

    #[test]
    fn counter_is_palindromic() {
        let c: Vec<usize> = (0..31).map(i_counter).collect();
        assert_eq!(c[15], 15);
        for r in 0..31 {
            assert_eq!(c[r], c[30 - r]);
        }
    }

    #[test]
    fn identity_layer_reduces_to_one_diffusion() {
        let spec = ISucSpec::new_unchecked_optimality([SBox4::IDENTITY; 16], [0; 60]).unwrap();
        let mut rng = Trng::from_u64(3);
        for _ in 0..1000 {
            let x = rng.bits(64);
            let oracle = (0..31).fold(x, |s, _| diffuse_oracle(s));
            assert_eq!(spec.apply(x), oracle);
            assert_eq!(oracle, diffuse_oracle(x));
        }
    }

    #[test]
    fn apply_is_an_involution_with_weak_sboxes() {
        let mut rng = Trng::from_u64(4);
        let spec = ISucSpec::new_unchecked_optimality([xor1(); 16], random_luts(&mut rng)).unwrap();
        for _ in 0..1000 {
            let x = rng.bits(64);
            assert_eq!(spec.apply(spec.apply(x)), x);
        }
    }

    #[test]
    fn one_lut_bit_changes_output() {
        let sbox = SBox4::new([0, 1, 2, 3, 8, 10, 12, 15, 4, 13, 5, 14, 6, 9, 11, 7]).unwrap();
        assert!(sbox.is_optimal() && sbox.is_involution());
        let mut rng = Trng::from_u64(5);
        let luts = random_luts(&mut rng);
        let a = ISucSpec::new([sbox; 16], luts).unwrap();
        let mut luts_b = luts;
        luts_b[17] ^= 1 << 9;
        let b = ISucSpec::new([sbox; 16], luts_b).unwrap();
        assert!((0..100).any(|_| {
            let x = rng.bits(64);
            a.apply(x) != b.apply(x)
        }));
    }

    #[test]
    fn commutation() {
        let mut rng = Trng::from_u64(6);
        assert_eq!(check_commutation(0, 1000, &mut rng), Commutation::Holds);
        let spec = ISucSpec::new_unchecked_optimality([xor1(); 16], random_luts(&mut rng)).unwrap();
        for r in 0..I_ROUND_KEYS {
            assert!(check_commutation(spec.round_key(r).unwrap(), 1000, &mut rng).holds());
        }
        let single = 0x0000_0000_0700_0000;
        // both sides at x = 0: diffuse(k) vs k
        assert_ne!(diffuse(single), single);
        assert_eq!(
            check_commutation(single, 1000, &mut rng),
            Commutation::Fails { counterexample: 0 }
        );
    }

    #[test]
    fn rejects_non_involutions() {
        let mut sboxes = [xor1(); 16];
        sboxes[9] = SBox4::new(std::array::from_fn(|x| ((x + 1) % 16) as u8)).unwrap();
        assert_eq!(
            ISucSpec::new_unchecked_optimality(sboxes, [0; 60]),
            Err(CipherError::NotInvolution(9))
        );
        assert_eq!(ISucSpec::new([xor1(); 16], [0; 60]), Err(CipherError::NotOptimal(0)));
    }

    #[test]
    fn trace_shape() {
        let sbox = SBox4::new([0, 1, 2, 3, 8, 10, 12, 15, 4, 13, 5, 14, 6, 9, 11, 7]).unwrap();
        let mut rng = Trng::from_u64(7);
        let spec = ISucSpec::new([sbox; 16], random_luts(&mut rng)).unwrap();
        assert_eq!(spec.trace(5, None).unwrap(), [0; I_LAYERS]);
        for bit in 0..64 {
            let x = rng.bits(64);
            let t = spec.trace(x, Some(bit)).unwrap();
            assert!((1..=4).contains(&t[0]));
            // one active nibble after layer 1 spreads to 15 nibbles
            let mut a = spec.layer.apply(x);
            let mut b = spec.layer.apply(x ^ (1 << bit));
            a = diffuse(a) ^ spec.round_keys[0];
            b = diffuse(b) ^ spec.round_keys[0];
            let touched = (0..16).filter(|i| ((a ^ b) >> (4 * i)) & 0xf != 0).count();
            assert_eq!(touched, 15);
            assert!(t[1] >= 15);
        }
        assert!(spec.trace(0, Some(64)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn diffuse_is_linear(x: u64, y: u64) {
            proptest::prop_assert_eq!(diffuse(x ^ y), diffuse(x) ^ diffuse(y));
        }

        #[test]
        fn zero_sum_keys_commute(k: u64, x: u64) {
            let k = k ^ nibble_xor(k);
            proptest::prop_assert_eq!(nibble_xor(k), 0);
            proptest::prop_assert_eq!(diffuse(x ^ k), diffuse(x) ^ k);
        }
    }
}
