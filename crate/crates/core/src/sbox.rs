//! 4-bit S-boxes: difference and correlation tables, optimality and
//! involution checks, the involutive-optimal catalog, and sampling.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use thiserror::Error;

use crate::trng::Trng;

/// Number of involutions on 16 points.
pub const INVOLUTION_COUNT: usize = 46_206_736;
/// Size of the involutive-optimal catalog as produced by
/// [`enumerate_involutive_optimal`].
pub const INVOLUTIVE_OPTIMAL_COUNT: usize = 2_795_520;
/// Rejection-sampling retry bound used by [`sample_optimal`].
pub const SAMPLE_RETRY_LIMIT: u32 = 10_000;
/// Environment variable naming an on-disk catalog cache.
pub const CATALOG_CACHE_ENV: &str = "SUC_SBOX_CACHE";

const CACHE_MAGIC: &[u8; 4] = b"SBX1";

#[derive(Debug, Error)]
pub enum SBoxError {
    #[error("invalid S-box: entry {index} has value {value}, expected a nibble")]
    InvalidSBox { index: usize, value: u8 },
    #[error("S-box is not a bijection")]
    NotBijective,
    #[error("expected {expected} bytes, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("no S-box passed the filters within {0} retries")]
    FilterExhausted(u32),
    #[error("cannot write S-box cache {path}: {source}")]
    CacheWriteFailure { path: PathBuf, source: io::Error },
    #[error("cannot read S-box cache {path}: {source}")]
    CacheReadFailure { path: PathBuf, source: io::Error },
    #[error("malformed S-box cache: {0}")]
    MalformedCache(String),
}

/// A 4-bit to 4-bit mapping. Every entry is a nibble; bijectivity is a
/// property checked where needed, not a construction invariant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SBox4([u8; 16]);

impl SBox4 {
    pub const IDENTITY: SBox4 = SBox4([0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15]);

    pub fn new(table: [u8; 16]) -> Result<Self, SBoxError> {
        if let Some((index, &value)) = table.iter().enumerate().find(|(_, &v)| v > 0xf) {
            return Err(SBoxError::InvalidSBox { index, value });
        }
        Ok(SBox4(table))
    }

    pub fn from_slice(table: &[u8]) -> Result<Self, SBoxError> {
        let arr: [u8; 16] = table.try_into().map_err(|_| SBoxError::WrongLength {
            expected: 16,
            got: table.len(),
        })?;
        Self::new(arr)
    }

    pub fn table(&self) -> &[u8; 16] {
        &self.0
    }

    #[inline]
    pub fn apply(&self, x: u8) -> u8 {
        self.0[usize::from(x & 0xf)]
    }

    pub fn is_bijective(&self) -> bool {
        let seen = self.0.iter().fold(0u16, |acc, &v| acc | (1 << v));
        seen == 0xffff
    }

    pub fn diff_table(&self) -> DiffTable {
        let mut t = [[0u8; 16]; 16];
        for a in 0..16u8 {
            for x in 0..16u8 {
                let b = self.apply(x ^ a) ^ self.apply(x);
                t[usize::from(a)][usize::from(b)] += 1;
            }
        }
        DiffTable(t)
    }

    pub fn lin_table(&self) -> LinTable {
        let mut t = [[0u8; 16]; 16];
        for a in 0..16u8 {
            for b in 0..16u8 {
                let agree = (0..16u8)
                    .filter(|&x| parity(a & x) == parity(b & self.apply(x)))
                    .count() as i32;
                t[usize::from(a)][usize::from(b)] = (2 * agree - 16).unsigned_abs() as u8;
            }
        }
        LinTable(t)
    }

    /// Bijective with Lin = 8 and Diff = 4.
    pub fn is_optimal(&self) -> bool {
        self.is_bijective() && self.diff_table().diff() == 4 && self.lin_table().lin() == 8
    }

    pub fn is_involution(&self) -> bool {
        (0..16u8).all(|x| self.apply(self.apply(x)) == x)
    }

    /// No single-bit input difference maps to a single-bit output difference.
    pub fn has_single_bit_diffusion(&self) -> bool {
        let ddt = self.diff_table();
        SINGLE_BITS
            .iter()
            .all(|&a| SINGLE_BITS.iter().all(|&b| ddt.get(a, b) == 0))
    }

    pub fn invert(&self) -> Result<SBox4, SBoxError> {
        if !self.is_bijective() {
            return Err(SBoxError::NotBijective);
        }
        let mut inv = [0u8; 16];
        for (x, &y) in self.0.iter().enumerate() {
            inv[usize::from(y)] = x as u8;
        }
        Ok(SBox4(inv))
    }

    /// `x ↦ B·S(A·x ⊕ a) ⊕ b`.
    pub fn affine_transform(&self, p: &AffinePair) -> SBox4 {
        let mut out = [0u8; 16];
        for (x, o) in out.iter_mut().enumerate() {
            *o = p.outer.apply(self.apply(p.inner.apply(x as u8) ^ p.inner_const)) ^ p.outer_const;
        }
        SBox4(out)
    }

    /// Four 16-bit truth tables, one per output bit, little-endian: bit `t`
    /// of word `i` is bit `i` of `S(t)`.
    pub fn to_lut_block(&self) -> [u8; 8] {
        let mut out = [0u8; 8];
        for i in 0..4 {
            let word = (0..16).fold(0u16, |w, t| w | (u16::from((self.0[t] >> i) & 1) << t));
            out[2 * i..2 * i + 2].copy_from_slice(&word.to_le_bytes());
        }
        out
    }

    pub fn from_lut_block(bytes: &[u8]) -> Result<SBox4, SBoxError> {
        if bytes.len() != 8 {
            return Err(SBoxError::WrongLength {
                expected: 8,
                got: bytes.len(),
            });
        }
        let mut table = [0u8; 16];
        for i in 0..4 {
            let word = u16::from_le_bytes([bytes[2 * i], bytes[2 * i + 1]]);
            for (t, v) in table.iter_mut().enumerate() {
                *v |= (((word >> t) & 1) as u8) << i;
            }
        }
        Ok(SBox4(table))
    }
}

const SINGLE_BITS: [u8; 4] = [1, 2, 4, 8];

#[inline]
fn parity(v: u8) -> bool {
    v.count_ones() & 1 == 1
}

/// `entry[a][b] = #{x : S(x⊕a) ⊕ S(x) = b}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffTable([[u8; 16]; 16]);

impl DiffTable {
    pub fn get(&self, a: u8, b: u8) -> u8 {
        self.0[usize::from(a)][usize::from(b)]
    }

    pub fn rows(&self) -> &[[u8; 16]; 16] {
        &self.0
    }

    /// Largest entry over nonzero input differences.
    pub fn diff(&self) -> u8 {
        self.0[1..].iter().flatten().copied().max().unwrap_or(0)
    }
}

/// `entry[a][b] = |2·#{x : a·x = b·S(x)} − 16|`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinTable([[u8; 16]; 16]);

impl LinTable {
    pub fn get(&self, a: u8, b: u8) -> u8 {
        self.0[usize::from(a)][usize::from(b)]
    }

    pub fn rows(&self) -> &[[u8; 16]; 16] {
        &self.0
    }

    /// Largest entry over any input mask and nonzero output mask.
    pub fn lin(&self) -> u8 {
        self.0.iter().flat_map(|row| row[1..].iter()).copied().max().unwrap_or(0)
    }

    /// `NL = 8 − Lin/2`.
    pub fn nonlinearity(&self) -> u8 {
        8 - self.lin() / 2
    }
}

/// A 4×4 matrix over GF(2), stored as row bitmasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitMatrix4([u8; 4]);

impl BitMatrix4 {
    pub const IDENTITY: BitMatrix4 = BitMatrix4([1, 2, 4, 8]);

    pub fn from_rows(rows: [u8; 4]) -> Self {
        BitMatrix4(rows.map(|r| r & 0xf))
    }

    #[inline]
    pub fn apply(&self, x: u8) -> u8 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &row)| acc | (u8::from(parity(row & x)) << i))
    }

    /// Column `j` is the image of the unit vector `e_j`.
    pub fn from_columns(cols: [u8; 4]) -> Self {
        let rows = std::array::from_fn(|i| {
            (0..4).fold(0u8, |r, j| r | (((cols[j] >> i) & 1) << j))
        });
        BitMatrix4(rows)
    }

    pub fn column(&self, j: usize) -> u8 {
        self.apply(1 << j)
    }

    pub fn inverse(&self) -> Option<BitMatrix4> {
        let cols: Option<Vec<u8>> = (0..4)
            .map(|j| (0..16u8).find(|&x| self.apply(x) == 1 << j))
            .collect();
        cols.map(|c| BitMatrix4::from_columns([c[0], c[1], c[2], c[3]]))
    }

    pub fn is_invertible(&self) -> bool {
        // the kernel is trivial iff no nonzero input maps to zero
        (1..16u8).all(|x| self.apply(x) != 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AffinePair {
    pub inner: BitMatrix4,
    pub inner_const: u8,
    pub outer: BitMatrix4,
    pub outer_const: u8,
}

impl AffinePair {
    pub fn new(inner: BitMatrix4, inner_const: u8, outer: BitMatrix4, outer_const: u8) -> Option<Self> {
        (inner.is_invertible() && outer.is_invertible()).then_some(AffinePair {
            inner,
            inner_const: inner_const & 0xf,
            outer,
            outer_const: outer_const & 0xf,
        })
    }

    pub fn random(rng: &mut Trng) -> Self {
        let mut matrix = || loop {
            let m = BitMatrix4::from_rows(split_nibbles(rng.bits(16) as u16));
            if m.is_invertible() {
                return m;
            }
        };
        let inner = matrix();
        let outer = matrix();
        AffinePair {
            inner,
            inner_const: rng.bits(4) as u8,
            outer,
            outer_const: rng.bits(4) as u8,
        }
    }
}

fn split_nibbles(v: u16) -> [u8; 4] {
    [0, 1, 2, 3].map(|i| ((v >> (4 * i)) & 0xf) as u8)
}

/// Every involution on 16 points with Lin = 8 and Diff = 4, in
/// lexicographic order of their tables.
///
/// The search walks involutions by pairing the smallest unassigned point
/// with itself or a larger unassigned point, maintaining the difference
/// table incrementally and cutting any branch where a nonzero-input entry
/// exceeds 4. Linearity is checked at the leaves.
pub fn enumerate_involutive_optimal() -> Vec<SBox4> {
    // split on the first two pairing decisions for parallelism
    let mut prefixes = Vec::new();
    for y0 in 0..16u8 {
        let mut s = Partial::new();
        if !s.assign_pair(0, y0) {
            continue;
        }
        let next = s.first_unassigned().expect("at least one point left");
        for y1 in next..16u8 {
            let mut t = s.clone();
            if t.is_free(y1) && t.assign_pair(next, y1) {
                prefixes.push(t);
            }
        }
    }
    let mut out: Vec<SBox4> = prefixes
        .into_par_iter()
        .flat_map_iter(|mut p| {
            let mut found = Vec::new();
            p.search(&mut found);
            found
        })
        .collect();
    out.sort_unstable();
    out
}

const UNSET: u8 = 0xff;

#[derive(Clone)]
struct Partial {
    map: [u8; 16],
    ddt: [[u8; 16]; 16],
    order: [u8; 16],
    len: usize,
}

impl Partial {
    fn new() -> Self {
        Partial {
            map: [UNSET; 16],
            ddt: [[0; 16]; 16],
            order: [0; 16],
            len: 0,
        }
    }

    fn is_free(&self, x: u8) -> bool {
        self.map[usize::from(x)] == UNSET
    }

    fn first_unassigned(&self) -> Option<u8> {
        (0..16u8).find(|&x| self.is_free(x))
    }

    /// Adds `x ↦ y` and counts the new ordered pairs; returns false (with
    /// the counts left dirty) if any nonzero-input entry exceeds 4.
    fn add_point(&mut self, x: u8, y: u8) -> bool {
        let mut ok = true;
        for &z in &self.order[..self.len] {
            let a = usize::from(x ^ z);
            let b = usize::from(y ^ self.map[usize::from(z)]);
            self.ddt[a][b] += 2;
            ok &= self.ddt[a][b] <= 4;
        }
        self.map[usize::from(x)] = y;
        self.order[self.len] = x;
        self.len += 1;
        ok
    }

    fn remove_last(&mut self) {
        self.len -= 1;
        let x = self.order[self.len];
        let y = self.map[usize::from(x)];
        for &z in &self.order[..self.len] {
            let a = usize::from(x ^ z);
            let b = usize::from(y ^ self.map[usize::from(z)]);
            self.ddt[a][b] -= 2;
        }
        self.map[usize::from(x)] = UNSET;
    }

    /// Assigns `x ↔ y` (a fixed point when equal). On failure the state is
    /// left as it was.
    fn assign_pair(&mut self, x: u8, y: u8) -> bool {
        if !self.add_point(x, y) {
            self.remove_last();
            return false;
        }
        if x != y && !self.add_point(y, x) {
            self.remove_last();
            self.remove_last();
            return false;
        }
        true
    }

    fn unassign_pair(&mut self, x: u8, y: u8) {
        self.remove_last();
        if x != y {
            self.remove_last();
        }
    }

    fn search(&mut self, found: &mut Vec<SBox4>) {
        let Some(x) = self.first_unassigned() else {
            let s = SBox4(self.map);
            if s.lin_table().lin() == 8 {
                found.push(s);
            }
            return;
        };
        for y in x..16u8 {
            if self.is_free(y) && self.assign_pair(x, y) {
                self.search(found);
                self.unassign_pair(x, y);
            }
        }
    }
}

/// Catalog file: `SBX1`, count (u32 LE), then one 8-byte LUT block per S-box.
pub fn write_catalog(path: &Path, sboxes: &[SBox4]) -> Result<(), SBoxError> {
    let wrap = |source| SBoxError::CacheWriteFailure {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::with_capacity(8 + 8 * sboxes.len());
    bytes.extend_from_slice(CACHE_MAGIC);
    bytes.extend_from_slice(&(sboxes.len() as u32).to_le_bytes());
    for s in sboxes {
        bytes.extend_from_slice(&s.to_lut_block());
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(wrap)?;
    f.write_all(&bytes).map_err(wrap)?;
    f.sync_all().map_err(wrap)?;
    fs::rename(&tmp, path).map_err(wrap)
}

pub fn read_catalog(path: &Path) -> Result<Vec<SBox4>, SBoxError> {
    let bytes = fs::read(path).map_err(|source| SBoxError::CacheReadFailure {
        path: path.to_path_buf(),
        source,
    })?;
    parse_catalog(&bytes)
}

pub fn parse_catalog(bytes: &[u8]) -> Result<Vec<SBox4>, SBoxError> {
    if bytes.len() < 8 || &bytes[..4] != CACHE_MAGIC {
        return Err(SBoxError::MalformedCache("bad magic".into()));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != 8 * count {
        return Err(SBoxError::MalformedCache(format!(
            "header says {count} entries, body holds {} bytes",
            body.len()
        )));
    }
    body.chunks_exact(8).map(SBox4::from_lut_block).collect()
}

/// The process-wide involutive-optimal catalog, built on first use. When
/// `SUC_SBOX_CACHE` names a readable catalog file it is loaded from there;
/// otherwise it is enumerated and, if the variable is set, written back.
pub fn involutive_catalog() -> &'static [SBox4] {
    static CATALOG: OnceLock<Vec<SBox4>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let cache = std::env::var_os(CATALOG_CACHE_ENV).map(PathBuf::from);
        if let Some(path) = &cache {
            if let Ok(set) = read_catalog(path) {
                if set.len() == INVOLUTIVE_OPTIMAL_COUNT {
                    return set;
                }
            }
        }
        let set = enumerate_involutive_optimal();
        if let Some(path) = &cache {
            // a failed cache write only costs a re-enumeration next time
            let _ = write_catalog(path, &set);
        }
        set
    })
}

/// Draws an optimal S-box from the catalog.
///
/// With `require_involution` the draw is a uniform catalog index. Otherwise
/// a uniform catalog member is composed with a uniform affine pair, which
/// keeps optimality but is generally no longer an involution. Either way the
/// result is then rejection-filtered for single-bit diffusion if requested.
pub fn sample_optimal(
    rng: &mut Trng,
    require_involution: bool,
    require_single_bit_diffusion: bool,
) -> Result<SBox4, SBoxError> {
    sample_from(
        involutive_catalog(),
        rng,
        require_involution,
        require_single_bit_diffusion,
    )
}

pub fn sample_from(
    catalog: &[SBox4],
    rng: &mut Trng,
    require_involution: bool,
    require_single_bit_diffusion: bool,
) -> Result<SBox4, SBoxError> {
    assert!(!catalog.is_empty(), "empty catalog");
    for _ in 0..SAMPLE_RETRY_LIMIT {
        let base = catalog[rng.below(catalog.len() as u64) as usize];
        let candidate = if require_involution {
            base
        } else if require_single_bit_diffusion {
            match diffusion_preserving_pair(&base, rng) {
                Some(p) => base.affine_transform(&p),
                None => continue,
            }
        } else {
            base.affine_transform(&AffinePair::random(rng))
        };
        if !require_single_bit_diffusion || candidate.has_single_bit_diffusion() {
            return Ok(candidate);
        }
    }
    Err(SBoxError::FilterExhausted(SAMPLE_RETRY_LIMIT))
}

/// Uniform affine pair among those whose transform of `base` has
/// single-bit diffusion, or `None` if there is none.
///
/// The transform's difference table is `entry'[α][β] = entry[Aα][B⁻¹β]`, so
/// the filter holds iff every column of `A` and every column of `B⁻¹` index
/// a zero entry of `base`'s table. Only a few in a million uniformly random
/// pairs qualify, so rather than rejecting we weight each `A` by the number
/// of admissible `B⁻¹` and draw directly.
pub fn diffusion_preserving_pair(base: &SBox4, rng: &mut Trng) -> Option<AffinePair> {
    let ddt = base.diff_table();
    // zero_cols[u]: nonzero v with entry[u][v] == 0
    let zero_cols: [u16; 16] = std::array::from_fn(|u| {
        (1..16u8)
            .filter(|&v| ddt.get(u as u8, v) == 0)
            .fold(0u16, |m, v| m | (1 << v))
    });
    let matrices = invertible_matrices();
    let counts = ordered_basis_counts();
    let admissible = |(_, cols): &(BitMatrix4, [u8; 4])| -> u16 {
        cols.iter().fold(0xfffe, |m, &u| m & zero_cols[usize::from(u)])
    };
    let weights: Vec<u32> = matrices
        .iter()
        .map(|a| counts[usize::from(admissible(a))])
        .collect();
    let total: u64 = weights.iter().map(|&w| u64::from(w)).sum();
    if total == 0 {
        return None;
    }
    let mut pick = rng.below(total);
    let (inner, zmask) = matrices
        .iter()
        .zip(&weights)
        .find_map(|(a, &w)| {
            let w = u64::from(w);
            if pick < w {
                Some((a.0, admissible(a)))
            } else {
                pick -= w;
                None
            }
        })
        .expect("pick below total weight");
    let members: Vec<u8> = (1..16u8).filter(|&v| zmask >> v & 1 == 1).collect();
    let outer_inv = loop {
        let cols: [u8; 4] =
            std::array::from_fn(|_| members[rng.below(members.len() as u64) as usize]);
        let m = BitMatrix4::from_columns(cols);
        if m.is_invertible() {
            break m;
        }
    };
    Some(AffinePair {
        inner,
        inner_const: rng.bits(4) as u8,
        outer: outer_inv.inverse().expect("invertible"),
        outer_const: rng.bits(4) as u8,
    })
}

/// All 20,160 invertible 4×4 matrices with their columns, ordered by row
/// encoding.
fn invertible_matrices() -> &'static [(BitMatrix4, [u8; 4])] {
    static ALL: OnceLock<Vec<(BitMatrix4, [u8; 4])>> = OnceLock::new();
    ALL.get_or_init(|| {
        (0..=u16::MAX)
            .map(|v| BitMatrix4::from_rows(split_nibbles(v)))
            .filter(BitMatrix4::is_invertible)
            .map(|m| (m, std::array::from_fn(|j| m.column(j))))
            .collect()
    })
}

/// For each subset of nonzero nibbles (as a 16-bit mask), how many ordered
/// bases of GF(2)^4 it contains.
fn ordered_basis_counts() -> &'static [u32] {
    static COUNTS: OnceLock<Vec<u32>> = OnceLock::new();
    COUNTS.get_or_init(|| {
        let mut counts = vec![0u32; 1 << 16];
        for (_, cols) in invertible_matrices() {
            let cols = cols.iter().fold(0u16, |acc, &c| acc | (1 << c));
            counts[usize::from(cols)] += 1;
        }
        // superset sums: a mask contains every basis whose column set it covers
        for bit in 0..16 {
            for mask in 0..(1usize << 16) {
                if mask >> bit & 1 == 1 {
                    counts[mask] += counts[mask ^ (1 << bit)];
                }
            }
        }
        counts
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const PRESENT: [u8; 16] = [
        0xC, 0x5, 0x6, 0xB, 0x9, 0x0, 0xA, 0xD, 0x3, 0xE, 0xF, 0x8, 0x4, 0x7, 0x1, 0x2,
    ];

    fn present() -> SBox4 {
        SBox4::new(PRESENT).unwrap()
    }

    fn swap01() -> SBox4 {
        let mut t = *SBox4::IDENTITY.table();
        t.swap(0, 1);
        SBox4::new(t).unwrap()
    }

    fn shift() -> SBox4 {
        SBox4::new(std::array::from_fn(|x| ((x + 1) % 16) as u8)).unwrap()
    }

    // Independent oracles: plain pair counting and Walsh sums with +-1 terms.
    fn ddt_oracle(s: &[u8; 16]) -> [[u32; 16]; 16] {
        let mut t = [[0u32; 16]; 16];
        for x in 0..16usize {
            for x2 in 0..16usize {
                t[x ^ x2][usize::from(s[x] ^ s[x2])] += 1;
            }
        }
        t
    }

    fn walsh_oracle(s: &[u8; 16], a: u8, b: u8) -> i32 {
        (0..16u8)
            .map(|x| {
                let bit = ((a & x).count_ones() + (b & s[usize::from(x)]).count_ones()) % 2;
                if bit == 0 { 1 } else { -1 }
            })
            .sum()
    }

    #[test]
    fn rejects_non_nibbles() {
        let mut t = [0u8; 16];
        t[3] = 16;
        assert!(matches!(
            SBox4::new(t),
            Err(SBoxError::InvalidSBox { index: 3, value: 16 })
        ));
        assert!(matches!(
            SBox4::from_slice(&[0; 15]),
            Err(SBoxError::WrongLength { expected: 16, got: 15 })
        ));
    }

    #[test]
    fn identity_tables() {
        let ddt = SBox4::IDENTITY.diff_table();
        for a in 0..16 {
            for b in 0..16 {
                assert_eq!(ddt.get(a, b), if a == b { 16 } else { 0 });
            }
        }
        assert_eq!(ddt.diff(), 16);
        assert_eq!(SBox4::IDENTITY.lin_table().lin(), 16);
    }

    #[test]
    fn constant_tables() {
        let zero = SBox4::new([0; 16]).unwrap();
        let ddt = zero.diff_table();
        for a in 0..16 {
            assert_eq!(ddt.get(a, 0), 16);
        }
        // b·S(x) = 0 everywhere, so for a = 0 every x agrees
        let lat = zero.lin_table();
        assert_eq!(lat.get(0, 5), 16);
        assert_eq!(lat.lin(), 16);
        assert!(!zero.is_optimal());
    }

    #[test]
    fn present_matches_oracles() {
        let s = present();
        let oracle = ddt_oracle(&PRESENT);
        let ddt = s.diff_table();
        let mut max = 0;
        for a in 0..16u8 {
            for b in 0..16u8 {
                assert_eq!(u32::from(ddt.get(a, b)), oracle[a as usize][b as usize]);
                if a != 0 {
                    max = max.max(oracle[a as usize][b as usize]);
                }
            }
        }
        assert_eq!(max, 4);
        assert_eq!(ddt.diff(), 4);

        let lat = s.lin_table();
        let mut lmax = 0;
        for a in 0..16u8 {
            for b in 0..16u8 {
                let w = walsh_oracle(&PRESENT, a, b).unsigned_abs();
                assert_eq!(u32::from(lat.get(a, b)), w);
                if a != 0 && b != 0 {
                    lmax = lmax.max(w);
                }
            }
        }
        assert_eq!(lmax, 8);
        assert_eq!(lat.lin(), 8);
        assert_eq!(lat.nonlinearity(), 4);
        assert!(s.is_optimal());
    }

    #[test]
    fn table_invariants() {
        for s in [present(), SBox4::IDENTITY, swap01(), shift(), SBox4::new([3; 16]).unwrap()] {
            let ddt = s.diff_table();
            for row in ddt.rows() {
                assert_eq!(row.iter().map(|&v| u32::from(v)).sum::<u32>(), 16);
            }
            assert_eq!(ddt.get(0, 0), 16);
            let lat = s.lin_table();
            assert_eq!(lat.get(0, 0), 16);
            assert!(lat.rows().iter().flatten().all(|&v| v % 2 == 0 && v <= 16));
        }
    }

    #[test]
    fn optimality_and_involution_checks() {
        assert!(!SBox4::IDENTITY.is_optimal());
        assert!(!SBox4::new([1; 16]).unwrap().is_optimal());
        assert!(SBox4::IDENTITY.is_involution());
        assert!(!shift().is_involution());
        assert!(swap01().is_involution());
    }

    #[test]
    fn single_bit_diffusion() {
        assert!(!SBox4::IDENTITY.has_single_bit_diffusion());
        assert!(present().has_single_bit_diffusion());
        assert!(!swap01().has_single_bit_diffusion());
    }

    #[test]
    fn inversion() {
        assert_eq!(SBox4::IDENTITY.invert().unwrap(), SBox4::IDENTITY);
        assert_eq!(swap01().invert().unwrap(), swap01());
        let down = SBox4::new(std::array::from_fn(|x| ((x + 15) % 16) as u8)).unwrap();
        assert_eq!(shift().invert().unwrap(), down);
        let inv = present().invert().unwrap();
        assert!((0..16).all(|x| inv.apply(present().apply(x)) == x));
        assert!(matches!(
            SBox4::new([0; 16]).unwrap().invert(),
            Err(SBoxError::NotBijective)
        ));
    }

    #[test]
    fn lut_block_layout() {
        let b = SBox4::IDENTITY.to_lut_block();
        let words: Vec<u16> = b.chunks(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
        assert_eq!(words, [0xAAAA, 0xCCCC, 0xF0F0, 0xFF00]);
        assert_eq!(SBox4::new([0; 16]).unwrap().to_lut_block(), [0; 8]);
        assert_eq!(SBox4::from_lut_block(&b).unwrap(), SBox4::IDENTITY);
        assert!(matches!(
            SBox4::from_lut_block(&[0; 7]),
            Err(SBoxError::WrongLength { expected: 8, got: 7 })
        ));
    }

    #[test]
    fn affine_invariance_sampled() {
        let mut rng = Trng::from_u64(11);
        let samples = [present(), SBox4::IDENTITY, swap01(), shift()];
        for _ in 0..200 {
            let p = AffinePair::random(&mut rng);
            for s in samples {
                assert_eq!(s.affine_transform(&p).is_optimal(), s.is_optimal());
            }
        }
    }

    #[test]
    fn matrix_invertibility() {
        assert!(BitMatrix4::IDENTITY.is_invertible());
        assert!(!BitMatrix4::from_rows([1, 1, 4, 8]).is_invertible());
        assert!(AffinePair::new(BitMatrix4::from_rows([0; 4]), 0, BitMatrix4::IDENTITY, 0).is_none());
        // 20160 invertible 4x4 matrices over GF(2)
        let count = (0..=u16::MAX)
            .filter(|&v| BitMatrix4::from_rows(split_nibbles(v)).is_invertible())
            .count();
        assert_eq!(count, 20_160);
    }

    #[test]
    fn matrix_columns_and_inverse() {
        let mut rng = Trng::from_u64(21);
        for _ in 0..100 {
            let m = AffinePair::random(&mut rng).inner;
            let cols = std::array::from_fn(|j| m.column(j));
            assert_eq!(BitMatrix4::from_columns(cols), m);
            let inv = m.inverse().unwrap();
            assert!((0..16).all(|x| inv.apply(m.apply(x)) == x));
        }
        assert!(BitMatrix4::from_rows([1, 1, 4, 8]).inverse().is_none());
    }

    #[test]
    fn basis_counts() {
        let counts = ordered_basis_counts();
        assert_eq!(counts[0xfffe], 20_160);
        // {1, 2, 4, 8} holds exactly the 4! column orderings of the identity
        assert_eq!(counts[(1 << 1) | (1 << 2) | (1 << 4) | (1 << 8)], 24);
        assert_eq!(counts[(1 << 1) | (1 << 2) | (1 << 3) | (1 << 4)], 0);
    }

    #[test]
    fn diffusion_preserving_pairs_work() {
        let mut rng = Trng::from_u64(22);
        let base = present().invert().unwrap();
        for _ in 0..200 {
            let p = diffusion_preserving_pair(&base, &mut rng).unwrap();
            let s = base.affine_transform(&p);
            assert!(s.is_optimal() && s.has_single_bit_diffusion());
        }
    }

    #[test]
    fn catalog_parse_errors() {
        assert!(matches!(parse_catalog(b"SBX2\0\0\0\0"), Err(SBoxError::MalformedCache(_))));
        let mut bytes = b"SBX1".to_vec();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&[0; 8]);
        assert!(matches!(parse_catalog(&bytes), Err(SBoxError::MalformedCache(_))));
        bytes.extend_from_slice(&SBox4::IDENTITY.to_lut_block());
        assert_eq!(parse_catalog(&bytes).unwrap().len(), 2);
    }

    #[test]
    fn catalog_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.sbx");
        let set = vec![present(), swap01()];
        write_catalog(&path, &set).unwrap();
        assert_eq!(read_catalog(&path).unwrap(), set);
        let bad = dir.path().join("missing").join("c.sbx");
        assert!(matches!(
            write_catalog(&bad, &set),
            Err(SBoxError::CacheWriteFailure { .. })
        ));
    }

    #[test]
    fn sampling_from_small_catalog() {
        let catalog = [present().invert().unwrap(), present()];
        let mut a = Trng::from_u64(5);
        let mut b = Trng::from_u64(5);
        for _ in 0..20 {
            let s = sample_from(&catalog, &mut a, false, true).unwrap();
            assert!(s.is_optimal() && s.has_single_bit_diffusion());
            assert_eq!(s, sample_from(&catalog, &mut b, false, true).unwrap());
        }
        for _ in 0..20 {
            let s = sample_from(&catalog, &mut a, false, false).unwrap();
            assert!(s.is_optimal());
        }
        let only_bad = [swap01()];
        assert!(matches!(
            sample_from(&only_bad, &mut a, true, true),
            Err(SBoxError::FilterExhausted(SAMPLE_RETRY_LIMIT))
        ));
    }

    proptest::proptest! {
        #[test]
        fn lut_block_round_trip(table in proptest::array::uniform16(0u8..16)) {
            let s = SBox4::new(table).unwrap();
            proptest::prop_assert_eq!(SBox4::from_lut_block(&s.to_lut_block()).unwrap(), s);
        }

        #[test]
        fn invert_twice_is_identity(seed in 0u64..u64::MAX) {
            let mut t: [u8; 16] = std::array::from_fn(|x| x as u8);
            let mut rng = Trng::from_u64(seed);
            rand::seq::SliceRandom::shuffle(&mut t[..], &mut rng);
            let s = SBox4::new(t).unwrap();
            proptest::prop_assert_eq!(s.invert().unwrap().invert().unwrap(), s);
        }
    }
}
