//! Virtual bitstreams and the personalization GENIE.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "SUCB" | version: u16 | flags: u8 | count: u16 | count × entry | body
//! entry = template_id: u16 | kind: u8 | offset: u32 | length: u32
//! ```
//!
//! Offsets are relative to the start of the body. Flag bit 0 is the
//! reconfiguration lock; bit 1 marks an encrypted image, which is carried
//! through unchanged since encryption is modeled as identity.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cipher_i::ISucSpec;
use crate::cipher_ni::{CipherError, NiSucSpec};
use crate::instance::{CipherKind, SucInstance};
use crate::sbox::{sample_optimal, SBox4, SBoxError};
use crate::trng::Trng;

pub const MAGIC: &[u8; 4] = b"SUCB";
pub const FORMAT_VERSION: u16 = 1;
pub const FLAG_LOCKED: u8 = 0x01;
pub const FLAG_ENCRYPTED: u8 = 0x02;
pub const MAX_PAYLOAD: usize = 1 << 24;
pub const SBOX_LAYER_LEN: usize = 128;

const HEADER_LEN: usize = 4 + 2 + 1 + 2;
const ENTRY_LEN: usize = 2 + 1 + 4 + 4;

pub const SBOX_TEMPLATE_ID: u16 = 1;
pub const KEY_TEMPLATE_ID: u16 = 2;
pub const META_TEMPLATE_ID: u16 = 3;

#[derive(Debug, Error)]
pub enum GenieError {
    #[error("bitstream is locked against reconfiguration")]
    AlreadyLocked,
    #[error("bitstream has not been personalized")]
    NotPersonalized,
    #[error("device template still holds the default fill")]
    DefaultTemplateNotPersonalized,
    #[error("malformed bitstream: {0}")]
    MalformedDirectory(String),
    #[error("application payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte cap")]
    PayloadTooLarge(usize),
    #[error("bitstream does not describe a valid device: {0}")]
    InvalidDevice(#[from] CipherError),
    #[error(transparent)]
    Sampling(#[from] SBoxError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateKind {
    SboxLayer,
    KeyBank,
    Meta,
}

impl TemplateKind {
    fn byte(self) -> u8 {
        match self {
            TemplateKind::SboxLayer => 0,
            TemplateKind::KeyBank => 1,
            TemplateKind::Meta => 2,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(TemplateKind::SboxLayer),
            1 => Some(TemplateKind::KeyBank),
            2 => Some(TemplateKind::Meta),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TemplateEntry {
    pub template_id: u16,
    pub kind: TemplateKind,
    pub offset: u32,
    pub length: u32,
}

impl TemplateEntry {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset as usize..self.offset as usize + self.length as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VirtualBitstream {
    pub version: u16,
    pub flags: u8,
    pub directory: Vec<TemplateEntry>,
    pub body: Vec<u8>,
}

/// Template regions located by kind, after validation.
struct Layout {
    kind: CipherKind,
    sbox: std::ops::Range<usize>,
    keys: std::ops::Range<usize>,
}

impl VirtualBitstream {
    pub fn is_locked(&self) -> bool {
        self.flags & FLAG_LOCKED != 0
    }

    pub fn kind(&self) -> Result<CipherKind, GenieError> {
        Ok(self.layout()?.kind)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + ENTRY_LEN * self.directory.len() + self.body.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.flags);
        out.extend_from_slice(&(self.directory.len() as u16).to_le_bytes());
        for e in &self.directory {
            out.extend_from_slice(&e.template_id.to_le_bytes());
            out.push(e.kind.byte());
            out.extend_from_slice(&e.offset.to_le_bytes());
            out.extend_from_slice(&e.length.to_le_bytes());
        }
        out.extend_from_slice(&self.body);
        out
    }

    /// Parses and validates the header and template directory.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GenieError> {
        let bad = |m: &str| GenieError::MalformedDirectory(m.to_string());
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("missing SUCB magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(GenieError::MalformedDirectory(format!(
                "unsupported format version {version}"
            )));
        }
        let flags = bytes[6];
        let count = usize::from(u16::from_le_bytes([bytes[7], bytes[8]]));
        let dir_end = HEADER_LEN + count * ENTRY_LEN;
        if bytes.len() < dir_end {
            return Err(bad("truncated template directory"));
        }
        let directory = bytes[HEADER_LEN..dir_end]
            .chunks_exact(ENTRY_LEN)
            .map(|e| {
                let kind = TemplateKind::from_byte(e[2])
                    .ok_or_else(|| GenieError::MalformedDirectory(format!("unknown template kind {}", e[2])))?;
                Ok(TemplateEntry {
                    template_id: u16::from_le_bytes([e[0], e[1]]),
                    kind,
                    offset: u32::from_le_bytes(e[3..7].try_into().unwrap()),
                    length: u32::from_le_bytes(e[7..11].try_into().unwrap()),
                })
            })
            .collect::<Result<Vec<_>, GenieError>>()?;
        let bs = VirtualBitstream {
            version,
            flags,
            directory,
            body: bytes[dir_end..].to_vec(),
        };
        bs.layout()?;
        Ok(bs)
    }

    pub fn read(path: &Path) -> Result<Self, GenieError> {
        let bytes = fs::read(path).map_err(|source| GenieError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), GenieError> {
        fs::write(path, self.to_bytes()).map_err(|source| GenieError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn layout(&self) -> Result<Layout, GenieError> {
        let malformed = |m: String| GenieError::MalformedDirectory(m);
        let mut ranges: Vec<std::ops::Range<usize>> = Vec::new();
        for e in &self.directory {
            let r = e.range();
            if r.end > self.body.len() {
                return Err(malformed(format!("template {} lies outside the body", e.template_id)));
            }
            if ranges.iter().any(|o| o.start < r.end && r.start < o.end) {
                return Err(malformed(format!("template {} overlaps another", e.template_id)));
            }
            ranges.push(r);
        }
        let only = |kind: TemplateKind| -> Result<&TemplateEntry, GenieError> {
            let mut it = self.directory.iter().filter(|e| e.kind == kind);
            match (it.next(), it.next()) {
                (Some(e), None) => Ok(e),
                _ => Err(malformed(format!("expected exactly one {kind:?} template"))),
            }
        };
        let meta = only(TemplateKind::Meta)?;
        if meta.length != 1 {
            return Err(malformed("meta template must be one byte".into()));
        }
        let kind = CipherKind::from_meta_byte(self.body[meta.offset as usize])
            .ok_or_else(|| malformed("unknown cipher kind in meta template".into()))?;
        let sbox = only(TemplateKind::SboxLayer)?;
        if sbox.length as usize != SBOX_LAYER_LEN {
            return Err(malformed(format!("S-box layer template is {} bytes", sbox.length)));
        }
        let keys = only(TemplateKind::KeyBank)?;
        if keys.length as usize != kind.key_bank_len() {
            return Err(malformed(format!(
                "key bank template is {} bytes, {kind} needs {}",
                keys.length,
                kind.key_bank_len()
            )));
        }
        Ok(Layout {
            kind,
            sbox: sbox.range(),
            keys: keys.range(),
        })
    }

    fn has_default_sboxes(&self, layout: &Layout) -> bool {
        self.body[layout.sbox.clone()].iter().all(|&b| b == 0)
    }
}

/// Builds the template every unit starts from: the application payload
/// with default-filled (all-zero) template regions spliced in.
pub fn build_template(app_payload: &[u8], kind: CipherKind) -> Result<VirtualBitstream, GenieError> {
    if app_payload.len() > MAX_PAYLOAD {
        return Err(GenieError::PayloadTooLarge(app_payload.len()));
    }
    let (head, tail) = app_payload.split_at(app_payload.len() / 2);
    let mut body = Vec::with_capacity(app_payload.len() + SBOX_LAYER_LEN + kind.key_bank_len() + 1);
    let mut directory = Vec::with_capacity(3);
    let mut region = |body: &mut Vec<u8>, id, tkind, content: &[u8]| {
        directory.push(TemplateEntry {
            template_id: id,
            kind: tkind,
            offset: body.len() as u32,
            length: content.len() as u32,
        });
        body.extend_from_slice(content);
    };
    body.extend_from_slice(head);
    region(&mut body, SBOX_TEMPLATE_ID, TemplateKind::SboxLayer, &[0; SBOX_LAYER_LEN]);
    body.extend_from_slice(tail);
    region(&mut body, KEY_TEMPLATE_ID, TemplateKind::KeyBank, &vec![0; kind.key_bank_len()]);
    region(&mut body, META_TEMPLATE_ID, TemplateKind::Meta, &[kind.meta_byte()]);
    Ok(VirtualBitstream {
        version: FORMAT_VERSION,
        flags: 0,
        directory,
        body,
    })
}

/// TRNG bits accounted to one personalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EntropyLedger {
    /// Nominal bits for the 16 S-box selections (16 × ⌈log2 class size⌉).
    pub selection_bits: u64,
    pub key_bits: u64,
    pub total_bytes: u64,
    /// Bits actually drawn from the TRNG, including rejection overdraw.
    pub drawn_bits: u64,
}

impl EntropyLedger {
    pub fn for_kind(kind: CipherKind, drawn_bits: u64) -> Self {
        let selection_bits = 16 * kind.sbox_class_log2().ceil() as u64;
        let key_bits = 16 * kind.key_luts() as u64;
        EntropyLedger {
            selection_bits,
            key_bits,
            total_bytes: (selection_bits + key_bits).div_ceil(8),
            drawn_bits,
        }
    }

    pub fn overdraw_bits(&self) -> u64 {
        self.drawn_bits.saturating_sub(self.selection_bits + self.key_bits)
    }
}

/// Draws the 16 S-boxes for a device of `kind`.
///
/// NI selections are optimal S-boxes with single-bit diffusion. I selections
/// are uniform optimal involutions; no optimal involution has single-bit
/// diffusion, so that filter is not applied to them.
pub fn select_sboxes(kind: CipherKind, trng: &mut Trng) -> Result<[SBox4; 16], SBoxError> {
    let mut out = [SBox4::IDENTITY; 16];
    for s in out.iter_mut() {
        *s = match kind {
            CipherKind::Ni => sample_optimal(trng, false, true)?,
            CipherKind::I => sample_optimal(trng, true, false)?,
        };
    }
    Ok(out)
}

/// A fresh device of `kind` drawn the way the GENIE draws one, without the
/// bitstream round trip.
pub fn sample_instance(kind: CipherKind, trng: &mut Trng) -> Result<SucInstance, SBoxError> {
    let sboxes = select_sboxes(kind, trng)?;
    let luts: Vec<u16> = (0..kind.key_luts()).map(|_| trng.bits(16) as u16).collect();
    // selections are optimal by construction, and involutive for I
    Ok(match kind {
        CipherKind::Ni => SucInstance::Ni(NiSucSpec::new(sboxes, luts.try_into().unwrap()).expect("optimal selections")),
        CipherKind::I => SucInstance::I(ISucSpec::new(sboxes, luts.try_into().unwrap()).expect("optimal involutions")),
    })
}

/// Fills the template regions of an unlocked bitstream from the TRNG.
/// Bytes outside the template regions are left untouched.
pub fn personalize(bs: &VirtualBitstream, trng: &mut Trng) -> Result<(VirtualBitstream, EntropyLedger), GenieError> {
    if bs.is_locked() {
        return Err(GenieError::AlreadyLocked);
    }
    let layout = bs.layout()?;
    let start = trng.consumed_bits();
    let sboxes = select_sboxes(layout.kind, trng)?;
    let mut out = bs.clone();
    for (i, s) in sboxes.iter().enumerate() {
        let at = layout.sbox.start + 8 * i;
        out.body[at..at + 8].copy_from_slice(&s.to_lut_block());
    }
    for b in &mut out.body[layout.keys.clone()] {
        *b = trng.bits(8) as u8;
    }
    let ledger = EntropyLedger::for_kind(layout.kind, trng.consumed_bits() - start);
    Ok((out, ledger))
}

/// Sets the reconfiguration lock. Locking twice is a no-op.
pub fn lock(bs: &VirtualBitstream) -> Result<VirtualBitstream, GenieError> {
    let layout = bs.layout()?;
    if bs.has_default_sboxes(&layout) {
        return Err(GenieError::NotPersonalized);
    }
    let mut out = bs.clone();
    out.flags |= FLAG_LOCKED;
    Ok(out)
}

/// Reads the cipher a personalized bitstream configures.
pub fn load_device(bs: &VirtualBitstream) -> Result<SucInstance, GenieError> {
    let layout = bs.layout()?;
    if bs.has_default_sboxes(&layout) {
        return Err(GenieError::DefaultTemplateNotPersonalized);
    }
    let region = &bs.body[layout.sbox.clone()];
    let mut sboxes = [SBox4::IDENTITY; 16];
    for (s, block) in sboxes.iter_mut().zip(region.chunks_exact(8)) {
        *s = SBox4::from_lut_block(block)?;
    }
    let words: Vec<u16> = bs.body[layout.keys.clone()]
        .chunks_exact(2)
        .map(|w| u16::from_le_bytes([w[0], w[1]]))
        .collect();
    Ok(match layout.kind {
        CipherKind::Ni => SucInstance::Ni(NiSucSpec::new(sboxes, words.try_into().unwrap())?),
        CipherKind::I => SucInstance::I(ISucSpec::new(sboxes, words.try_into().unwrap())?),
    })
}

/// The one-shot personalization program. It owns the TRNG and is consumed
/// by use, so a unit can be forged exactly once per GENIE.
pub struct Genie {
    trng: Trng,
}

impl Genie {
    pub fn new(trng: Trng) -> Self {
        Genie { trng }
    }

    /// Personalizes and locks; the TRNG is dropped afterwards.
    pub fn forge(mut self, template: &VirtualBitstream) -> Result<(VirtualBitstream, EntropyLedger), GenieError> {
        let (bs, ledger) = personalize(template, &mut self.trng)?;
        Ok((lock(&bs)?, ledger))
    }
}

/// Storage needed to hold a mapping catalog, in megabits (2^20 bits).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StorageCost {
    pub bits: u128,
}

impl StorageCost {
    pub fn megabits(&self) -> f64 {
        self.bits as f64 / f64::from(1u32 << 20)
    }
}

pub fn genie_storage_cost(set_size: u64, bits_per_entry: u64) -> StorageCost {
    StorageCost {
        bits: u128::from(set_size) * u128::from(bits_per_entry),
    }
}
