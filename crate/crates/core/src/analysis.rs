//! Avalanche experiments, two-round active S-box searches and the counting
//! and bound calculators.

use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::cipher_i::{diffuse, ISucSpec};
use crate::cipher_ni::{NiSucSpec, BIT_PERMUTATION};
use crate::genie::sample_instance;
use crate::instance::CipherKind;
use crate::sbox::{SBox4, SBoxError};
use crate::trng::Trng;

/// Largest block size for which log2((2^n)!) is summed term by term.
pub const EXACT_FACTORIAL_MAX_BITS: u32 = 24;
/// Classical adequacy threshold for a codebook, log2.
pub const CLASSICAL_THRESHOLD_LOG2: u32 = 80;
/// Post-quantum adequacy threshold for a codebook, log2.
pub const POSTQUANTUM_THRESHOLD_LOG2: u32 = 160;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("exact log2((2^{0})!) is only summed for n <= {EXACT_FACTORIAL_MAX_BITS}")]
    ExactTermUnavailable(u32),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Sampling(#[from] SBoxError),
}

/// Hamming-distance statistics at one round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundStats {
    /// 1-based round (NI) or layer (I) number.
    pub round: usize,
    pub mean: f64,
    pub min: u32,
    pub max: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AvalancheReport {
    pub kind: CipherKind,
    pub instances: usize,
    pub trials: usize,
    pub rounds: Vec<RoundStats>,
}

impl AvalancheReport {
    /// First round from which every mean stays inside `[lo, hi]`.
    pub fn saturation_round(&self, lo: f64, hi: f64) -> Option<usize> {
        let mut first = None;
        for r in &self.rounds {
            if (lo..=hi).contains(&r.mean) {
                first.get_or_insert(r.round);
            } else {
                first = None;
            }
        }
        first
    }
}

/// Per-round avalanche of single-bit flips over freshly sampled instances.
pub fn avalanche_by_round(
    kind: CipherKind,
    n_instances: usize,
    n_inputs: usize,
    rng: &mut Trng,
) -> Result<AvalancheReport, AnalysisError> {
    avalanche_run(kind, n_instances, n_inputs, rng, true)
}

/// Same sampling as [`avalanche_by_round`] with nothing flipped; every
/// distance must come out 0.
pub fn avalanche_control(
    kind: CipherKind,
    n_instances: usize,
    n_inputs: usize,
    rng: &mut Trng,
) -> Result<AvalancheReport, AnalysisError> {
    avalanche_run(kind, n_instances, n_inputs, rng, false)
}

#[derive(Clone)]
struct Accum {
    sum: Vec<u64>,
    min: Vec<u32>,
    max: Vec<u32>,
}

impl Accum {
    fn new(len: usize) -> Self {
        Accum {
            sum: vec![0; len],
            min: vec![u32::MAX; len],
            max: vec![0; len],
        }
    }

    fn add(mut self, trace: &[u32]) -> Self {
        for (i, &d) in trace.iter().enumerate() {
            self.sum[i] += u64::from(d);
            self.min[i] = self.min[i].min(d);
            self.max[i] = self.max[i].max(d);
        }
        self
    }

    fn merge(mut self, other: Accum) -> Self {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.min[i] = self.min[i].min(other.min[i]);
            self.max[i] = self.max[i].max(other.max[i]);
        }
        self
    }
}

fn avalanche_run(
    kind: CipherKind,
    n_instances: usize,
    n_inputs: usize,
    rng: &mut Trng,
    flip: bool,
) -> Result<AvalancheReport, AnalysisError> {
    if n_instances == 0 || n_inputs == 0 {
        return Err(AnalysisError::InvalidArgument("instance and input counts must be positive".into()));
    }
    let len = kind.trace_len();
    let mut total = Accum::new(len);
    for _ in 0..n_instances {
        let inst = sample_instance(kind, rng)?;
        let trials: Vec<(u64, Option<u32>)> = (0..n_inputs)
            .map(|_| {
                let x = rng.bits(64);
                let bit = rng.bits(6) as u32;
                (x, flip.then_some(bit))
            })
            .collect();
        let acc = trials
            .par_iter()
            .fold(
                || Accum::new(len),
                |acc, &(x, bit)| acc.add(&inst.trace(x, bit).expect("bit index below 64")),
            )
            .reduce(|| Accum::new(len), Accum::merge);
        total = total.merge(acc);
    }
    let n = (n_instances * n_inputs) as f64;
    let rounds = (0..len)
        .map(|i| RoundStats {
            round: i + 1,
            mean: total.sum[i] as f64 / n,
            min: total.min[i],
            max: total.max[i],
        })
        .collect();
    Ok(AvalancheReport {
        kind,
        instances: n_instances,
        trials: n_inputs,
        rounds,
    })
}

/// Full-cipher Hamming-distance envelope for one instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstanceEnvelope {
    pub instance: usize,
    pub min: u32,
    pub max: u32,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassAvalancheReport {
    pub kind: CipherKind,
    pub messages: usize,
    pub instances: Vec<InstanceEnvelope>,
}

impl ClassAvalancheReport {
    /// Envelope printed for the class in the original measurements.
    pub fn reported_envelope(kind: CipherKind) -> (u32, u32) {
        match kind {
            CipherKind::I => (28, 35),
            CipherKind::Ni => (22, 31),
        }
    }

    /// Instances whose whole min..max range sits inside `[lo, hi]`.
    pub fn within(&self, lo: u32, hi: u32) -> usize {
        self.instances.iter().filter(|e| e.min >= lo && e.max <= hi).count()
    }

    pub fn mean_range(&self) -> (f64, f64) {
        self.instances
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.mean), hi.max(e.mean)))
    }
}

/// For each of `n_instances` sampled instances: `n_msgs` random messages,
/// each with every one of its 64 bits flipped in turn, measured at the
/// cipher output.
pub fn class_avalanche(
    kind: CipherKind,
    n_instances: usize,
    n_msgs: usize,
    rng: &mut Trng,
) -> Result<ClassAvalancheReport, AnalysisError> {
    if n_instances == 0 || n_msgs == 0 {
        return Err(AnalysisError::InvalidArgument("instance and message counts must be positive".into()));
    }
    let mut jobs = Vec::with_capacity(n_instances);
    for _ in 0..n_instances {
        let inst = sample_instance(kind, rng)?;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&rng.bits(64).to_le_bytes());
        }
        jobs.push((inst, seed));
    }
    let instances = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (inst, seed))| {
            let mut msgs = Trng::from_seed(*seed);
            let (mut min, mut max, mut sum) = (u32::MAX, 0, 0u64);
            for _ in 0..n_msgs {
                let x = msgs.bits(64);
                let y = inst.encrypt(x);
                for b in 0..64 {
                    let d = (y ^ inst.encrypt(x ^ (1 << b))).count_ones();
                    min = min.min(d);
                    max = max.max(d);
                    sum += u64::from(d);
                }
            }
            InstanceEnvelope {
                instance: i,
                min,
                max,
                mean: sum as f64 / (64 * n_msgs) as f64,
            }
        })
        .collect();
    Ok(ClassAvalancheReport {
        kind,
        messages: n_msgs,
        instances,
    })
}

/// Reports that serialize as a CSV table.
pub trait CsvTable {
    fn header(&self) -> &'static [&'static str];
    fn rows(&self) -> Vec<Vec<String>>;

    fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for r in self.rows() {
            w.write_record(&r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

impl CsvTable for AvalancheReport {
    fn header(&self) -> &'static [&'static str] {
        &["kind", "round", "mean", "min", "max", "instances", "trials"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rounds
            .iter()
            .map(|r| {
                vec![
                    self.kind.to_string(),
                    r.round.to_string(),
                    format!("{:.4}", r.mean),
                    r.min.to_string(),
                    r.max.to_string(),
                    self.instances.to_string(),
                    self.trials.to_string(),
                ]
            })
            .collect()
    }
}

impl CsvTable for ClassAvalancheReport {
    fn header(&self) -> &'static [&'static str] {
        &["kind", "instance", "min", "max", "mean", "messages"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.instances
            .iter()
            .map(|e| {
                vec![
                    self.kind.to_string(),
                    e.instance.to_string(),
                    e.min.to_string(),
                    e.max.to_string(),
                    format!("{:.4}", e.mean),
                    self.messages.to_string(),
                ]
            })
            .collect()
    }
}

pub fn emit_csv(report: &impl CsvTable, path: &Path) -> Result<(), AnalysisError> {
    fs::write(path, report.to_csv()).map_err(|source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Attack {
    Differential,
    Linear,
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attack::Differential => "differential",
            Attack::Linear => "linear",
        })
    }
}

/// Outcome of a two-round active S-box search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSboxReport {
    pub kind: CipherKind,
    pub attack: Attack,
    pub minimum: u32,
    /// The published lower bound for this kind and attack.
    pub claimed: u32,
    /// First-layer output pattern (nibble differences or masks) of one
    /// minimal trail.
    pub witness: u64,
}

/// Published two-round lower bounds.
pub fn claimed_min_active(kind: CipherKind, attack: Attack) -> u32 {
    match (kind, attack) {
        (CipherKind::I, Attack::Linear) => 2,
        _ => 4,
    }
}

/// Exhaustive two-round minimum of active S-boxes.
///
/// For I the diffusion layer is linear on nibbles and its matrix is
/// symmetric, so differences and masks propagate identically; a dynamic
/// program over nibble values finds the exact minimum. For NI the search is
/// truncated to S-box positions: an active S-box may turn any nonzero input
/// support into any nonzero output support, except that differential
/// single-bit inputs must give at least two output bits.
pub fn min_active_sboxes(kind: CipherKind, attack: Attack) -> ActiveSboxReport {
    let (minimum, witness) = match kind {
        CipherKind::I => i_two_layer_minimum(),
        CipherKind::Ni => {
            let allowed = |a: u8, b: u8| attack == Attack::Linear || !(a.count_ones() == 1 && b.count_ones() == 1);
            ni_truncated_minimum(&[allowed_table(allowed); 16], false)
        }
    };
    ActiveSboxReport {
        kind,
        attack,
        minimum,
        claimed: claimed_min_active(kind, attack),
        witness,
    }
}

/// The NI differential search restricted to trails whose first-round active
/// S-boxes each receive a single-bit difference.
pub fn min_active_sboxes_ni_single_bit_entry() -> ActiveSboxReport {
    let allowed = |a: u8, b: u8| !(a.count_ones() == 1 && b.count_ones() == 1);
    let (minimum, witness) = ni_truncated_minimum(&[allowed_table(allowed); 16], true);
    ActiveSboxReport {
        kind: CipherKind::Ni,
        attack: Attack::Differential,
        minimum,
        claimed: claimed_min_active(CipherKind::Ni, Attack::Differential),
        witness,
    }
}

/// Value-level two-round differential minimum for a concrete NI instance,
/// using each position's actual difference table.
pub fn min_active_sboxes_ni_value(spec: &NiSucSpec) -> ActiveSboxReport {
    let tables: Vec<[[bool; 16]; 16]> = spec
        .sboxes()
        .iter()
        .map(|s| {
            let ddt = s.diff_table();
            allowed_table(|a, b| ddt.get(a, b) > 0)
        })
        .collect();
    let (minimum, witness) = ni_truncated_minimum(&tables.try_into().unwrap(), false);
    ActiveSboxReport {
        kind: CipherKind::Ni,
        attack: Attack::Differential,
        minimum,
        claimed: claimed_min_active(CipherKind::Ni, Attack::Differential),
        witness,
    }
}

fn allowed_table(f: impl Fn(u8, u8) -> bool) -> [[bool; 16]; 16] {
    let mut t = [[false; 16]; 16];
    for a in 1..16u8 {
        for b in 1..16u8 {
            t[a as usize][b as usize] = f(a, b);
        }
    }
    t
}

/// Minimizes wt(v) + wt(diffuse(v)) over nonzero nibble vectors `v`.
fn i_two_layer_minimum() -> (u32, u64) {
    const INF: u32 = u32::MAX / 2;
    let mut best = (INF, 0u64);
    // output nibble i is v_i ^ s where s is the XOR of all nibbles
    for s in 0..16u8 {
        let cost = |v: u8| u32::from(v != 0) + u32::from(v ^ s != 0);
        // dp[x][nz]: cheapest prefix with running XOR x and any-nonzero flag
        let mut dp = vec![[[INF; 2]; 16]];
        dp[0][0][0] = 0;
        for pos in 0..16 {
            let mut next = [[INF; 2]; 16];
            for x in 0..16 {
                for nz in 0..2 {
                    let c = dp[pos][x][nz];
                    if c == INF {
                        continue;
                    }
                    for v in 0..16u8 {
                        let (nx, nnz) = (x ^ v as usize, nz | usize::from(v != 0));
                        next[nx][nnz] = next[nx][nnz].min(c + cost(v));
                    }
                }
            }
            dp.push(next);
        }
        let total = dp[16][s as usize][1];
        if total < best.0 {
            // walk back to recover one optimal vector
            let (mut x, mut nz, mut v_all) = (s as usize, 1usize, 0u64);
            for pos in (0..16).rev() {
                let target = dp[pos + 1][x][nz];
                let (v, px, pnz) = (0..16u8)
                    .flat_map(|v| (0..2).map(move |pnz| (v, pnz)))
                    .map(|(v, pnz)| (v, x ^ v as usize, pnz))
                    .find(|&(v, px, pnz)| {
                        (pnz | usize::from(v != 0)) == nz && dp[pos][px][pnz] != INF && dp[pos][px][pnz] + cost(v) == target
                    })
                    .expect("consistent table");
                v_all |= u64::from(v) << (4 * pos);
                x = px;
                nz = pnz;
            }
            best = (total, v_all);
        }
    }
    debug_assert_eq!(
        best.0,
        nibble_weight(best.1) + nibble_weight(diffuse(best.1)),
        "witness must realize the minimum"
    );
    best
}

pub fn nibble_weight(x: u64) -> u32 {
    (0..16).filter(|i| (x >> (4 * i)) & 0xf != 0).count() as u32
}

/// Next-round S-box reached by output bit `t` of S-box `j`.
fn next_sbox(j: usize, t: usize) -> usize {
    usize::from(BIT_PERMUTATION[4 * j + t]) / 4
}

/// Branch-and-bound over first-round active S-boxes and their output
/// supports. Returns the minimum and a first-round output pattern.
fn ni_truncated_minimum(allowed: &[[[bool; 16]; 16]; 16], single_bit_entry: bool) -> (u32, u64) {
    // per position: the output supports reachable from some permitted input
    let outs: Vec<Vec<u8>> = (0..16)
        .map(|j| {
            (1..16u8)
                .filter(|&b| {
                    (1..16u8)
                        .filter(|a| !single_bit_entry || a.count_ones() == 1)
                        .any(|a| allowed[j][a as usize][b as usize])
                })
                .collect()
        })
        .collect();
    let spread = |j: usize, b: u8| -> u16 {
        (0..4).filter(|t| b >> t & 1 == 1).fold(0, |m, t| m | 1 << next_sbox(j, t))
    };

    struct Search<'a> {
        outs: &'a [Vec<u8>],
        spread: &'a dyn Fn(usize, u8) -> u16,
        best: u32,
        witness: u64,
    }
    impl Search<'_> {
        fn go(&mut self, pos: usize, active: u32, reached: u16, pattern: u64) {
            let floor = active + (reached.count_ones()).max(u32::from(active > 0));
            if active > 0 && floor >= self.best {
                return;
            }
            if pos == 16 {
                if active > 0 {
                    self.best = floor;
                    self.witness = pattern;
                }
                return;
            }
            // leaving later positions inactive is always allowed
            self.go(pos + 1, active, reached, pattern);
            if active + 1 >= self.best {
                return;
            }
            for &b in &self.outs[pos] {
                let r = reached | (self.spread)(pos, b);
                self.go(pos + 1, active + 1, r, pattern | u64::from(b) << (4 * pos));
            }
        }
    }
    let mut s = Search {
        outs: &outs,
        spread: &spread,
        best: u32::MAX,
        witness: 0,
    };
    s.go(0, 0, 0, 0);
    (s.best, s.witness)
}

/// Builds a concrete pair of plaintexts for `spec` that follows the minimal
/// I trail (two first-layer S-boxes with equal output differences), and
/// returns them with the number of active S-boxes measured over the first
/// two layers.
pub fn i_witness_on_instance(spec: &ISucSpec) -> Option<(u64, u64, u32)> {
    let sb = spec.sboxes();
    let (i, j) = (0usize, 1usize);
    let pick = |s: &SBox4, a: u8, d: u8| (0..16u8).find(|&x| s.apply(x) ^ s.apply(x ^ a) == d);
    for d in 1..16u8 {
        for ai in 1..16u8 {
            let Some(xi) = pick(&sb[i], ai, d) else { continue };
            for aj in 1..16u8 {
                let Some(xj) = pick(&sb[j], aj, d) else { continue };
                let x = u64::from(xi) << (4 * i) | u64::from(xj) << (4 * j);
                let x2 = x ^ (u64::from(ai) << (4 * i)) ^ (u64::from(aj) << (4 * j));
                let layer = |v: u64| -> u64 {
                    (0..16).fold(0, |acc, n| acc | u64::from(sb[n].apply((v >> (4 * n)) as u8 & 0xf)) << (4 * n))
                };
                let k0 = spec.round_key(0).expect("round 0 exists");
                let second = |v: u64| diffuse(layer(v)) ^ k0;
                let active = nibble_weight(x ^ x2) + nibble_weight(second(x) ^ second(x2));
                return Some((x, x2, active));
            }
        }
    }
    None
}

/// log2 of the linear and differential data complexity over `rounds`
/// rounds, with a per-S-box bias and probability of 2^-2.
pub fn data_complexity_bounds(rounds: u32) -> Result<(u32, u32), AnalysisError> {
    if rounds == 0 {
        return Err(AnalysisError::InvalidArgument("rounds must be at least 1".into()));
    }
    Ok((4 * rounds, 4 * rounds))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cardinalities {
    pub class_size_log2: f64,
    pub key_entropy: u32,
    pub cre_total: f64,
}

/// Class size and cloning-resistance entropy for `distinct_layers` distinct
/// S-layers of `block_bits / 4` S-boxes each.
pub fn cardinalities(kind: CipherKind, distinct_layers: u32, block_bits: u32) -> Result<Cardinalities, AnalysisError> {
    if block_bits == 0 || !block_bits.is_multiple_of(4) {
        return Err(AnalysisError::InvalidArgument(format!("block size {block_bits} is not a positive multiple of 4")));
    }
    let class_size_log2 = kind.sbox_class_log2() * f64::from(distinct_layers) * f64::from(block_bits / 4);
    // one stored 16-bit LUT per round-key bit; I keys carry one derived nibble
    let key_entropy = match kind {
        CipherKind::Ni => 16 * block_bits,
        CipherKind::I => 16 * (block_bits - 4),
    };
    Ok(Cardinalities {
        class_size_log2,
        key_entropy,
        cre_total: class_size_log2 + f64::from(key_entropy),
    })
}

/// Number of S-layers that can differ from each other in one instance.
pub fn max_distinct_layers(kind: CipherKind) -> u32 {
    match kind {
        CipherKind::Ni => 31,
        // the counter runs up and back down, so layers pair up
        CipherKind::I => 16,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerfectBounds {
    /// log2((2^n)!) by summation, when `n` is small enough.
    pub s_max_log2_exact: Option<f64>,
    pub s_max_log2_stirling: f64,
    pub cre_max: f64,
}

impl PerfectBounds {
    pub fn exact(&self, n: u32) -> Result<f64, AnalysisError> {
        self.s_max_log2_exact.ok_or(AnalysisError::ExactTermUnavailable(n))
    }
}

/// Size of the full permutation family on `n`-bit blocks.
pub fn perfect_bounds(n: u32) -> PerfectBounds {
    let stirling = (f64::from(n) - 2.0) * 2f64.powi(n as i32);
    let exact = (n <= EXACT_FACTORIAL_MAX_BITS).then(|| (2..=1u64 << n).map(|i| (i as f64).log2()).sum());
    PerfectBounds {
        s_max_log2_exact: exact,
        s_max_log2_stirling: stirling,
        cre_max: stirling,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelingReport {
    pub ccbs_log2: u32,
    pub meets_classical: bool,
    pub meets_postquantum: bool,
    pub grover_log2: f64,
}

/// Codebook size against the adequacy thresholds, and the Grover search
/// exponent over the class (half the rounded single-layer class size).
pub fn modeling_and_quantum(n: u32, kind: CipherKind) -> ModelingReport {
    let class = cardinalities(kind, 1, 64).expect("64 is a multiple of 4").class_size_log2;
    ModelingReport {
        ccbs_log2: n,
        meets_classical: n >= CLASSICAL_THRESHOLD_LOG2,
        meets_postquantum: n >= POSTQUANTUM_THRESHOLD_LOG2,
        grover_log2: class.round() / 2.0,
    }
}

/// Every calculator for one kind, printable as `key=value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub kind: CipherKind,
    pub class_size_log2: f64,
    pub key_entropy: u32,
    pub cre_total: f64,
    pub class_size_upper_log2: f64,
    pub cre_upper: f64,
    pub rounds: u32,
    pub n_l_log2: u32,
    pub n_d_log2: u32,
    pub grover_log2: f64,
    pub ccbs_log2: u32,
    pub meets_classical: bool,
    pub meets_postquantum: bool,
    pub s_max_log2_stirling: f64,
    pub s_max_log2_exact: Option<f64>,
    pub perfect_bits: u32,
}

pub fn bound_report(kind: CipherKind, block_bits: u32, rounds: u32, perfect_bits: u32) -> Result<BoundReport, AnalysisError> {
    let one = cardinalities(kind, 1, block_bits)?;
    let all = cardinalities(kind, max_distinct_layers(kind), block_bits)?;
    let (n_l_log2, n_d_log2) = data_complexity_bounds(rounds)?;
    let m = modeling_and_quantum(block_bits, kind);
    let p = perfect_bounds(perfect_bits);
    Ok(BoundReport {
        kind,
        class_size_log2: one.class_size_log2,
        key_entropy: one.key_entropy,
        cre_total: one.cre_total,
        class_size_upper_log2: all.class_size_log2,
        cre_upper: all.cre_total,
        rounds,
        n_l_log2,
        n_d_log2,
        grover_log2: m.grover_log2,
        ccbs_log2: m.ccbs_log2,
        meets_classical: m.meets_classical,
        meets_postquantum: m.meets_postquantum,
        s_max_log2_stirling: p.s_max_log2_stirling,
        s_max_log2_exact: p.s_max_log2_exact,
        perfect_bits,
    })
}

impl BoundReport {
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").expect("string write");
        kv("kind", self.kind.to_string());
        kv("class_size_log2", format!("{:.2}", self.class_size_log2));
        kv("key_entropy", self.key_entropy.to_string());
        kv("cre_total", format!("{:.2}", self.cre_total));
        kv("class_size_upper_log2", format!("{:.2}", self.class_size_upper_log2));
        kv("cre_upper", format!("{:.2}", self.cre_upper));
        kv("rounds", self.rounds.to_string());
        kv("n_l_log2", self.n_l_log2.to_string());
        kv("n_d_log2", self.n_d_log2.to_string());
        kv("grover_log2", format!("{}", self.grover_log2));
        kv("ccbs_log2", self.ccbs_log2.to_string());
        kv("meets_classical", self.meets_classical.to_string());
        kv("meets_postquantum", self.meets_postquantum.to_string());
        kv("perfect_bits", self.perfect_bits.to_string());
        kv("s_max_log2_stirling", format!("{}", self.s_max_log2_stirling));
        kv(
            "s_max_log2_exact",
            self.s_max_log2_exact.map_or("unavailable".into(), |e| format!("{e:.2}")),
        );
        s
    }
}

/// Active-S-box summary for every kind and attack, as `key=value` lines.
pub fn active_sbox_summary() -> String {
    let mut s = String::new();
    for kind in CipherKind::ALL {
        for attack in [Attack::Differential, Attack::Linear] {
            let r = min_active_sboxes(kind, attack);
            writeln!(
                s,
                "{kind}_{attack}_min={} claimed={} witness={:016x}",
                r.minimum, r.claimed, r.witness
            )
            .expect("string write");
        }
    }
    let e = min_active_sboxes_ni_single_bit_entry();
    writeln!(s, "ni_differential_single_bit_entry_min={} witness={:016x}", e.minimum, e.witness).expect("string write");
    s
}
