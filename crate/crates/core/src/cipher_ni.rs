//! Non-involutive SUC class: a 64-bit SPN with 31 rounds, 16 optimal
//! S-boxes, a fixed bit permutation and a LUT-stored random key schedule.
//!
//! Bit 0 of a state is its least significant bit; nibble `i` is bits
//! `4i..4i+3` and is substituted by S-box `i`.

use thiserror::Error;

use crate::sbox::SBox4;

pub const NI_ROUNDS: usize = 31;
pub const NI_ROUND_KEYS: usize = NI_ROUNDS + 1;
pub const NI_KEY_LUTS: usize = 64;

/// Output position of every state bit.
pub const BIT_PERMUTATION: [u8; 64] = [
    0, 4, 8, 12, 16, 20, 24, 28, //
    32, 36, 40, 44, 48, 52, 56, 60, //
    1, 5, 9, 13, 17, 21, 25, 29, //
    33, 37, 41, 45, 49, 53, 57, 61, //
    2, 6, 10, 14, 18, 22, 26, 30, //
    34, 38, 42, 46, 50, 54, 58, 62, //
    3, 7, 11, 15, 19, 23, 27, 31, //
    35, 39, 43, 47, 51, 55, 59, 63,
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CipherError {
    #[error("S-box {0} is not a bijection")]
    NotBijective(usize),
    #[error("S-box {0} is not optimal")]
    NotOptimal(usize),
    #[error("S-box {0} is not an involution")]
    NotInvolution(usize),
    #[error("index {index} out of range 0..{bound}")]
    IndexOutOfRange { index: usize, bound: usize },
}

/// Sixteen S-boxes applied nibble-wise, with byte-wide lookup tables for
/// speed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct SubstitutionLayer {
    sboxes: [SBox4; 16],
    bytes: [[u8; 256]; 8],
}

impl SubstitutionLayer {
    pub(crate) fn new(sboxes: [SBox4; 16]) -> Self {
        let mut bytes = [[0u8; 256]; 8];
        for (j, table) in bytes.iter_mut().enumerate() {
            let (lo, hi) = (sboxes[2 * j], sboxes[2 * j + 1]);
            for (v, out) in table.iter_mut().enumerate() {
                let v = v as u8;
                *out = lo.apply(v & 0xf) | (hi.apply(v >> 4) << 4);
            }
        }
        SubstitutionLayer { sboxes, bytes }
    }

    pub(crate) fn sboxes(&self) -> &[SBox4; 16] {
        &self.sboxes
    }

    #[inline]
    pub(crate) fn apply(&self, x: u64) -> u64 {
        let mut out = 0u64;
        for (j, table) in self.bytes.iter().enumerate() {
            let byte = (x >> (8 * j)) as u8;
            out |= u64::from(table[usize::from(byte)]) << (8 * j);
        }
        out
    }
}

/// A fully materialized NI-SUC instance.
///
/// `key_luts[j]` is the truth table of key bit `j`: its bit `c` is bit `j`
/// of stored round key `c`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NiSucSpec {
    forward: SubstitutionLayer,
    inverse: SubstitutionLayer,
    key_luts: [u16; NI_KEY_LUTS],
    round_keys: [u64; NI_ROUND_KEYS],
}

impl NiSucSpec {
    /// Builds an instance after checking every S-box is optimal.
    pub fn new(sboxes: [SBox4; 16], key_luts: [u16; NI_KEY_LUTS]) -> Result<Self, CipherError> {
        if let Some(i) = sboxes.iter().position(|s| !s.is_optimal()) {
            return Err(CipherError::NotOptimal(i));
        }
        Self::new_unchecked_optimality(sboxes, key_luts)
    }

    /// Only bijectivity is checked. For experiments and test oracles that
    /// need weak S-boxes such as the identity.
    pub fn new_unchecked_optimality(
        sboxes: [SBox4; 16],
        key_luts: [u16; NI_KEY_LUTS],
    ) -> Result<Self, CipherError> {
        let mut inv = [SBox4::IDENTITY; 16];
        for (i, s) in sboxes.iter().enumerate() {
            inv[i] = s.invert().map_err(|_| CipherError::NotBijective(i))?;
        }
        let round_keys = std::array::from_fn(|i| stored_key(&key_luts, ni_counter(i)));
        Ok(NiSucSpec {
            forward: SubstitutionLayer::new(sboxes),
            inverse: SubstitutionLayer::new(inv),
            key_luts,
            round_keys,
        })
    }

    pub fn sboxes(&self) -> &[SBox4; 16] {
        self.forward.sboxes()
    }

    pub fn key_luts(&self) -> &[u16; NI_KEY_LUTS] {
        &self.key_luts
    }

    pub fn round_key(&self, i: usize) -> Result<u64, CipherError> {
        self.round_keys
            .get(i)
            .copied()
            .ok_or(CipherError::IndexOutOfRange {
                index: i,
                bound: NI_ROUND_KEYS,
            })
    }

    pub fn encrypt(&self, x: u64) -> u64 {
        let mut state = x;
        for r in 0..NI_ROUNDS {
            state = permute64(self.forward.apply(state ^ self.round_keys[r]));
        }
        state ^ self.round_keys[NI_ROUNDS]
    }

    pub fn decrypt(&self, y: u64) -> u64 {
        let mut state = y ^ self.round_keys[NI_ROUNDS];
        for r in (0..NI_ROUNDS).rev() {
            state = self.inverse.apply(inverse_permute64(state)) ^ self.round_keys[r];
        }
        state
    }

    /// Hamming distance between the two encryptions of `x` and `x` with
    /// `flip_bit` toggled, after each of the 31 rounds.
    pub fn trace(&self, x: u64, flip_bit: Option<u32>) -> Result<[u32; NI_ROUNDS], CipherError> {
        let other = flip(x, flip_bit)?;
        let (mut a, mut b) = (x, other);
        let mut out = [0u32; NI_ROUNDS];
        for (r, d) in out.iter_mut().enumerate() {
            a = permute64(self.forward.apply(a ^ self.round_keys[r]));
            b = permute64(self.forward.apply(b ^ self.round_keys[r]));
            *d = (a ^ b).count_ones();
        }
        Ok(out)
    }
}

pub(crate) fn flip(x: u64, flip_bit: Option<u32>) -> Result<u64, CipherError> {
    match flip_bit {
        None => Ok(x),
        Some(b) if b < 64 => Ok(x ^ (1 << b)),
        Some(b) => Err(CipherError::IndexOutOfRange {
            index: b as usize,
            bound: 64,
        }),
    }
}

/// Up-then-down 4-bit counter: `min(i, 31 − i)`.
pub fn ni_counter(i: usize) -> usize {
    i.min(NI_ROUND_KEYS - 1 - i)
}

fn stored_key(luts: &[u16; NI_KEY_LUTS], c: usize) -> u64 {
    luts.iter()
        .enumerate()
        .fold(0u64, |k, (j, &lut)| k | (u64::from((lut >> c) & 1) << j))
}

const fn byte_tables(forward: bool) -> [[u64; 256]; 8] {
    let mut t = [[0u64; 256]; 8];
    let mut j = 0;
    while j < 8 {
        let mut v = 0;
        while v < 256 {
            let mut out = 0u64;
            let mut k = 0;
            while k < 8 {
                if (v >> k) & 1 == 1 {
                    let src = 8 * j + k;
                    out |= 1 << if forward {
                        BIT_PERMUTATION[src] as usize
                    } else {
                        inverse_position(src)
                    };
                }
                k += 1;
            }
            t[j][v] = out;
            v += 1;
        }
        j += 1;
    }
    t
}

const fn inverse_position(p: usize) -> usize {
    let mut i = 0;
    while BIT_PERMUTATION[i] as usize != p {
        i += 1;
    }
    i
}

static PERMUTE: [[u64; 256]; 8] = byte_tables(true);
static UNPERMUTE: [[u64; 256]; 8] = byte_tables(false);

#[inline]
fn by_bytes(tables: &[[u64; 256]; 8], x: u64) -> u64 {
    tables
        .iter()
        .enumerate()
        .fold(0u64, |y, (j, t)| y | t[((x >> (8 * j)) & 0xff) as usize])
}

/// Output bit `BIT_PERMUTATION[i]` is input bit `i`.
#[inline]
pub fn permute64(x: u64) -> u64 {
    by_bytes(&PERMUTE, x)
}

#[inline]
pub fn inverse_permute64(y: u64) -> u64 {
    by_bytes(&UNPERMUTE, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trng::Trng;

    const PRESENT: [u8; 16] = [
        0xC, 0x5, 0x6, 0xB, 0x9, 0x0, 0xA, 0xD, 0x3, 0xE, 0xF, 0x8, 0x4, 0x7, 0x1, 0x2,
    ];

    fn random_spec(rng: &mut Trng) -> NiSucSpec {
        let base = [SBox4::new(PRESENT).unwrap()];
        let sboxes =
            std::array::from_fn(|_| crate::sbox::sample_from(&base, rng, false, true).unwrap());
        let luts = std::array::from_fn(|_| rng.bits(16) as u16);
        NiSucSpec::new(sboxes, luts).unwrap()
    }

    fn identity_spec() -> NiSucSpec {
        NiSucSpec::new_unchecked_optimality([SBox4::IDENTITY; 16], [0; NI_KEY_LUTS]).unwrap()
    }

    #[test]
    fn permutation_examples() {
        assert_eq!(permute64(1 << 1), 1 << 4);
        assert_eq!(permute64(1 << 16), 1 << 1);
        assert_eq!(permute64(0), 0);
        assert_eq!(permute64(u64::MAX), u64::MAX);
        // closed form of the table
        for i in 0..64 {
            assert_eq!(usize::from(BIT_PERMUTATION[i]), 4 * (i % 16) + i / 16);
        }
    }

    #[test]
    fn permutation_spreads_each_sbox() {
        let mut seen = [false; 64];
        for &p in &BIT_PERMUTATION {
            assert!(!seen[usize::from(p)]);
            seen[usize::from(p)] = true;
        }
        for k in 0..16 {
            let mut targets: Vec<u8> = (0..4).map(|j| BIT_PERMUTATION[4 * k + j] / 4).collect();
            targets.sort_unstable();
            targets.dedup();
            assert_eq!(targets.len(), 4);
        }
    }

    #[test]
    fn counter_is_palindromic() {
        let c: Vec<usize> = (0..32).map(ni_counter).collect();
        assert_eq!(&c[..16], &(0..16).collect::<Vec<_>>()[..]);
        assert_eq!(&c[16..], &(0..16).rev().collect::<Vec<_>>()[..]);
    }

    #[test]
    fn round_key_indexing() {
        let mut luts = [0u16; NI_KEY_LUTS];
        let spec = NiSucSpec::new_unchecked_optimality([SBox4::IDENTITY; 16], luts).unwrap();
        assert!((0..32).all(|i| spec.round_key(i).unwrap() == 0));
        luts[5] = 0x0002;
        let spec = NiSucSpec::new_unchecked_optimality([SBox4::IDENTITY; 16], luts).unwrap();
        for i in 0..32 {
            let expect = if i == 1 || i == 30 { 1 << 5 } else { 0 };
            assert_eq!(spec.round_key(i).unwrap(), expect, "round key {i}");
        }
        assert_eq!(
            spec.round_key(32),
            Err(CipherError::IndexOutOfRange { index: 32, bound: 32 })
        );
        let mut rng = Trng::from_u64(1);
        let spec = random_spec(&mut rng);
        assert_eq!(spec.round_key(0), spec.round_key(31));
    }

    #[test]
    fn identity_spec_is_repeated_permutation() {
        let spec = identity_spec();
        let mut rng = Trng::from_u64(2);
        for _ in 0..100 {
            let x = rng.bits(64);
            let mut oracle = x;
            for _ in 0..31 {
                // apply the table literally
                let mut y = 0u64;
                for i in 0..64 {
                    if oracle >> i & 1 == 1 {
                        y |= 1 << BIT_PERMUTATION[i];
                    }
                }
                oracle = y;
            }
            assert_eq!(spec.encrypt(x), oracle);
            let mut back = x;
            for _ in 0..31 {
                back = inverse_permute64(back);
            }
            assert_eq!(spec.decrypt(x), back);
        }
    }

    #[test]
    fn round_trips() {
        let mut rng = Trng::from_u64(3);
        for _ in 0..10 {
            let spec = random_spec(&mut rng);
            for _ in 0..1000 {
                let x = rng.bits(64);
                assert_eq!(spec.decrypt(spec.encrypt(x)), x);
            }
        }
        let zero_key = NiSucSpec::new(random_spec(&mut rng).sboxes().to_owned(), [0; 64]).unwrap();
        assert_eq!(zero_key.decrypt(zero_key.encrypt(0)), 0);
    }

    #[test]
    fn one_sbox_difference_is_visible() {
        let mut rng = Trng::from_u64(4);
        let a = random_spec(&mut rng);
        let mut sboxes = *a.sboxes();
        sboxes[7] = SBox4::new(PRESENT).unwrap().invert().unwrap();
        assert_ne!(sboxes[7], a.sboxes()[7]);
        let b = NiSucSpec::new(sboxes, *a.key_luts()).unwrap();
        assert!((0..100).any(|_| {
            let x = rng.bits(64);
            a.encrypt(x) != b.encrypt(x)
        }));
    }

    #[test]
    fn trace_bounds() {
        let mut rng = Trng::from_u64(5);
        let spec = random_spec(&mut rng);
        assert!(spec.sboxes().iter().all(|s| s.has_single_bit_diffusion()));
        for bit in 0..64 {
            let t = spec.trace(rng.bits(64), Some(bit)).unwrap();
            assert!((2..=4).contains(&t[0]), "round 1 distance {}", t[0]);
        }
        assert_eq!(spec.trace(9, None).unwrap(), [0; NI_ROUNDS]);
        assert!(spec.trace(9, Some(64)).is_err());
    }

    #[test]
    fn rejects_bad_sboxes() {
        let mut sboxes = [SBox4::new(PRESENT).unwrap(); 16];
        sboxes[3] = SBox4::IDENTITY;
        assert_eq!(NiSucSpec::new(sboxes, [0; 64]), Err(CipherError::NotOptimal(3)));
        sboxes[3] = SBox4::new([0; 16]).unwrap();
        assert_eq!(
            NiSucSpec::new_unchecked_optimality(sboxes, [0; 64]),
            Err(CipherError::NotBijective(3))
        );
    }

    #[test]
    fn key_bank_map_is_injective_on_single_bits() {
        // every LUT bit is read by some round, so flipping any one changes
        // the key sequence
        let sboxes = [SBox4::IDENTITY; 16];
        let base = NiSucSpec::new_unchecked_optimality(sboxes, [0; 64]).unwrap();
        for j in 0..NI_KEY_LUTS {
            for c in 0..16 {
                let mut luts = [0u16; 64];
                luts[j] = 1 << c;
                let s = NiSucSpec::new_unchecked_optimality(sboxes, luts).unwrap();
                assert!((0..32).any(|i| s.round_key(i) != base.round_key(i)));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn decrypt_inverts_encrypt(seed: u64, x: u64) {
            let spec = random_spec(&mut Trng::from_u64(seed));
            proptest::prop_assert_eq!(spec.decrypt(spec.encrypt(x)), x);
        }

        #[test]
        fn permutation_round_trip(x: u64) {
            proptest::prop_assert_eq!(inverse_permute64(permute64(x)), x);
        }
    }
}
