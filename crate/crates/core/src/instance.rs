use std::fmt;
use std::str::FromStr;

use crate::cipher_i::{ISucSpec, I_KEY_LUTS, I_LAYERS};
use crate::cipher_ni::{CipherError, NiSucSpec, NI_KEY_LUTS, NI_ROUNDS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CipherKind {
    /// Non-involutive: 31-round SPN with a bit permutation.
    Ni,
    /// Involutive: 32 substitution layers with XOR-sum diffusion.
    I,
}

impl CipherKind {
    pub const ALL: [CipherKind; 2] = [CipherKind::Ni, CipherKind::I];

    pub fn meta_byte(self) -> u8 {
        match self {
            CipherKind::Ni => 0,
            CipherKind::I => 1,
        }
    }

    pub fn from_meta_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(CipherKind::Ni),
            1 => Some(CipherKind::I),
            _ => None,
        }
    }

    pub fn key_luts(self) -> usize {
        match self {
            CipherKind::Ni => NI_KEY_LUTS,
            CipherKind::I => I_KEY_LUTS,
        }
    }

    /// Bytes of raw key material in a key bank (16 bits per LUT).
    pub fn key_bank_len(self) -> usize {
        2 * self.key_luts()
    }

    /// Number of per-round distances a trace produces.
    pub fn trace_len(self) -> usize {
        match self {
            CipherKind::Ni => NI_ROUNDS,
            CipherKind::I => I_LAYERS,
        }
    }

    /// log2 of the S-box class each selection draws from, as used for
    /// entropy and cardinality accounting: 2^20.4 optimal S-boxes for NI,
    /// 2^17.15 optimal involutions for I.
    pub fn sbox_class_log2(self) -> f64 {
        match self {
            CipherKind::Ni => 20.4,
            CipherKind::I => 17.15,
        }
    }
}

impl fmt::Display for CipherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CipherKind::Ni => "ni",
            CipherKind::I => "i",
        })
    }
}

impl FromStr for CipherKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ni" | "ni-suc" => Ok(CipherKind::Ni),
            "i" | "i-suc" => Ok(CipherKind::I),
            other => Err(format!("unknown cipher kind {other:?}, expected ni or i")),
        }
    }
}

/// A device's cipher, whichever class it belongs to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SucInstance {
    Ni(NiSucSpec),
    I(ISucSpec),
}

impl SucInstance {
    pub fn kind(&self) -> CipherKind {
        match self {
            SucInstance::Ni(_) => CipherKind::Ni,
            SucInstance::I(_) => CipherKind::I,
        }
    }

    pub fn encrypt(&self, x: u64) -> u64 {
        match self {
            SucInstance::Ni(s) => s.encrypt(x),
            SucInstance::I(s) => s.apply(x),
        }
    }

    pub fn decrypt(&self, y: u64) -> u64 {
        match self {
            SucInstance::Ni(s) => s.decrypt(y),
            SucInstance::I(s) => s.apply(y),
        }
    }

    /// Per-round distances; see [`NiSucSpec::trace`] and [`ISucSpec::trace`].
    pub fn trace(&self, x: u64, flip_bit: Option<u32>) -> Result<Vec<u32>, CipherError> {
        Ok(match self {
            SucInstance::Ni(s) => s.trace(x, flip_bit)?.to_vec(),
            SucInstance::I(s) => s.trace(x, flip_bit)?.to_vec(),
        })
    }

    pub fn sboxes(&self) -> &[crate::sbox::SBox4; 16] {
        match self {
            SucInstance::Ni(s) => s.sboxes(),
            SucInstance::I(s) => s.sboxes(),
        }
    }

    pub fn key_luts(&self) -> &[u16] {
        match self {
            SucInstance::Ni(s) => s.key_luts(),
            SucInstance::I(s) => s.key_luts(),
        }
    }

    /// The 128-byte S-box layer image: 16 consecutive LUT blocks.
    pub fn sbox_region(&self) -> Vec<u8> {
        self.sboxes().iter().flat_map(|s| s.to_lut_block()).collect()
    }

    /// The key bank image: LUT words, 16-bit little-endian, in order.
    pub fn key_bank_region(&self) -> Vec<u8> {
        self.key_luts().iter().flat_map(|w| w.to_le_bytes()).collect()
    }
}

impl From<NiSucSpec> for SucInstance {
    fn from(s: NiSucSpec) -> Self {
        SucInstance::Ni(s)
    }
}

impl From<ISucSpec> for SucInstance {
    fn from(s: ISucSpec) -> Self {
        SucInstance::I(s)
    }
}
