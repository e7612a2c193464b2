//! Seeded stand-in for the device TRNG.
//!
//! Personalization must be reproducible under test, so the generator is a
//! ChaCha20 keystream keyed by a 32-byte seed. Bits are handed out LSB-first
//! from 64-bit keystream words and every bit handed out is counted, which
//! lets the GENIE report exactly how much entropy it drew.

use rand::{RngCore, SeedableRng, TryRngCore};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeedError {
    #[error("seed must be 64 hex characters, got {0}")]
    WrongLength(usize),
    #[error("seed contains a non-hex character at position {0}")]
    NotHex(usize),
}

pub struct Trng {
    stream: ChaCha20Rng,
    buf: u64,
    avail: u32,
    consumed: u64,
}

impl std::fmt::Debug for Trng {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // never print keystream state
        f.debug_struct("Trng").field("consumed", &self.consumed).finish()
    }
}

impl Trng {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self {
            stream: ChaCha20Rng::from_seed(seed),
            buf: 0,
            avail: 0,
            consumed: 0,
        }
    }

    /// Convenience for tests and experiments: the seed is `n` in the first
    /// eight bytes (little-endian), zero elsewhere.
    pub fn from_u64(n: u64) -> Self {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&n.to_le_bytes());
        Self::from_seed(seed)
    }

    /// Non-reproducible mode seeded from the operating system.
    pub fn from_os_entropy() -> Self {
        let mut seed = [0u8; 32];
        rand::rngs::OsRng
            .try_fill_bytes(&mut seed)
            .expect("operating system entropy source unavailable");
        Self::from_seed(seed)
    }

    pub fn from_hex(hex: &str) -> Result<Self, SeedError> {
        Ok(Self::from_seed(parse_seed_hex(hex)?))
    }

    /// Draws `n` bits (0..=64), returned in the low bits of the result.
    pub fn bits(&mut self, n: u32) -> u64 {
        assert!(n <= 64, "at most 64 bits per draw");
        if n == 0 {
            return 0;
        }
        self.consumed += u64::from(n);
        if n <= self.avail {
            let out = self.buf & mask(n);
            self.buf = if n == 64 { 0 } else { self.buf >> n };
            self.avail -= n;
            return out;
        }
        let low = self.buf;
        let have = self.avail;
        let fresh = self.stream.next_u64();
        let need = n - have;
        let out = low | ((fresh & mask(need)) << have);
        self.buf = if need == 64 { 0 } else { fresh >> need };
        self.avail = 64 - need;
        out
    }

    /// Uniform integer in `[0, bound)` by rejection over `ceil(log2 bound)`
    /// bits. Rejected draws still count as consumed.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        if bound == 1 {
            return 0;
        }
        let width = 64 - (bound - 1).leading_zeros();
        loop {
            let v = self.bits(width);
            if v < bound {
                return v;
            }
        }
    }

    pub fn consumed_bits(&self) -> u64 {
        self.consumed
    }
}

impl RngCore for Trng {
    fn next_u32(&mut self) -> u32 {
        self.bits(32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.bits(64)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for b in dst {
            *b = self.bits(8) as u8;
        }
    }
}

fn mask(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

pub fn parse_seed_hex(hex: &str) -> Result<[u8; 32], SeedError> {
    let hex = hex.trim();
    if hex.len() != 64 {
        return Err(SeedError::WrongLength(hex.len()));
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in hex.as_bytes().chunks(2).enumerate() {
        let hi = hex_val(chunk[0]).ok_or(SeedError::NotHex(2 * i))?;
        let lo = hex_val(chunk[1]).ok_or(SeedError::NotHex(2 * i + 1))?;
        seed[i] = (hi << 4) | lo;
    }
    Ok(seed)
}

fn hex_val(c: u8) -> Option<u8> {
    (c as char).to_digit(16).map(|d| d as u8)
}
