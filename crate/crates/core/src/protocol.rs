//! Enrollment, the UIR store and challenge-response identification.
//!
//! Wire frames are `type: u8 | len: u16 LE | payload`:
//!
//! | type | name      | payload             |
//! |------|-----------|---------------------|
//! | 0x05 | HELLO     | serial, u64 LE      |
//! | 0x01 | CHALLENGE | y, u64 LE           |
//! | 0x02 | RESPONSE  | x', u64 LE          |
//! | 0x06 | RESULT    | 0x01 accept, 0x00 reject |
//!
//! The authority challenges with a stored ciphertext `y`; an authentic
//! device answers with its own inverse `x' = SUC⁻¹(y)`, which must equal the
//! enrolled plaintext. An unknown or exhausted serial gets RESULT 0x00
//! straight after HELLO.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::instance::SucInstance;
use crate::trng::Trng;

pub const FRAME_HELLO: u8 = 0x05;
pub const FRAME_CHALLENGE: u8 = 0x01;
pub const FRAME_RESPONSE: u8 = 0x02;
pub const FRAME_RESULT: u8 = 0x06;
pub const IO_TIMEOUT: Duration = Duration::from_secs(5);
pub const MAX_PAIRS: usize = 1 << 16;
/// Consecutive duplicate draws tolerated while picking distinct challenges.
pub const CHALLENGE_RETRY_LIMIT: u32 = 1_000;
pub const RESULT_ACCEPT: u8 = 0x01;
pub const RESULT_REJECT: u8 = 0x00;

const CSV_HEADER: [&str; 5] = ["sn", "idx", "x_hex", "y_hex", "consumed"];

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("network: {0}")]
    Network(#[from] io::Error),
    #[error("cannot listen on {addr}: {source}")]
    BindFailure { addr: String, source: io::Error },
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error("no enrolled device with serial {0}")]
    UnknownSerial(u64),
    #[error("could not draw a fresh challenge after {0} attempts")]
    DuplicateChallengeRetryExceeded(u32),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("line {line}, column {column}: {message}")]
    ParseError { line: u64, column: usize, message: String },
    #[error("device {sn} has pair index {index} twice")]
    DuplicateIndex { sn: u64, index: u16 },
    #[error("device {0} is already enrolled")]
    DuplicateSerial(u64),
    #[error("pair count must be between 1 and {MAX_PAIRS}, got {0}")]
    InvalidPairCount(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChallengePair {
    pub index: u16,
    pub x: u64,
    pub y: u64,
    pub consumed: bool,
}

/// Everything the trusted authority keeps about one device.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UirRecord {
    pub sn: u64,
    pub pairs: Vec<ChallengePair>,
}

impl UirRecord {
    pub fn remaining(&self) -> usize {
        self.pairs.iter().filter(|p| !p.consumed).count()
    }
}

/// Result of one identification session.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Accepted,
    Rejected,
    /// Every stored pair for the device has been used.
    Exhausted,
}

impl Outcome {
    /// The RESULT byte sent to the device. Exhaustion reads as a reject.
    pub fn result_byte(self) -> u8 {
        match self {
            Outcome::Accepted => RESULT_ACCEPT,
            Outcome::Rejected | Outcome::Exhausted => RESULT_REJECT,
        }
    }

    pub fn is_accepted(self) -> bool {
        self == Outcome::Accepted
    }
}

/// Enrolls a device: `t` distinct random challenges and their responses.
pub fn enroll(device: &SucInstance, sn: u64, t: usize, rng: &mut Trng) -> Result<UirRecord, ProtocolError> {
    if t == 0 || t > MAX_PAIRS {
        return Err(ProtocolError::InvalidPairCount(t));
    }
    let mut seen = HashSet::with_capacity(t);
    let mut pairs = Vec::with_capacity(t);
    let mut retries = 0;
    while pairs.len() < t {
        let x = rng.bits(64);
        if !seen.insert(x) {
            retries += 1;
            if retries >= CHALLENGE_RETRY_LIMIT {
                return Err(ProtocolError::DuplicateChallengeRetryExceeded(retries));
            }
            continue;
        }
        retries = 0;
        pairs.push(ChallengePair {
            index: pairs.len() as u16,
            x,
            y: device.encrypt(x),
            consumed: false,
        });
    }
    Ok(UirRecord { sn, pairs })
}

/// The device's answer to challenge `y`: its inverse cipher applied to it.
pub fn device_respond(device: &SucInstance, y: u64) -> u64 {
    device.decrypt(y)
}

/// UIR records keyed by serial number, optionally written through to a CSV
/// file after every change.
#[derive(Clone, Debug, Default)]
pub struct UirStore {
    records: BTreeMap<u64, UirRecord>,
    path: Option<PathBuf>,
}

impl UirStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens a write-through store, loading `path` if it exists.
    pub fn open(path: &Path) -> Result<Self, ProtocolError> {
        let mut store = if path.exists() { Self::load(path)? } else { Self::new() };
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, ProtocolError> {
        let text = fs::read_to_string(path).map_err(|source| ProtocolError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_csv(&text)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, sn: u64) -> Option<&UirRecord> {
        self.records.get(&sn)
    }

    pub fn records(&self) -> impl Iterator<Item = &UirRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, record: UirRecord) -> Result<(), ProtocolError> {
        if self.records.contains_key(&record.sn) {
            return Err(ProtocolError::DuplicateSerial(record.sn));
        }
        self.records.insert(record.sn, record);
        self.persist()
    }

    /// Picks a random unused pair for `sn` and marks it used before it is
    /// ever sent, so an aborted session still burns the pair.
    /// `None` means the record is exhausted.
    pub fn reserve(&mut self, sn: u64, rng: &mut Trng) -> Result<Option<ChallengePair>, ProtocolError> {
        let record = self.records.get_mut(&sn).ok_or(ProtocolError::UnknownSerial(sn))?;
        let open: Vec<usize> = (0..record.pairs.len()).filter(|&i| !record.pairs[i].consumed).collect();
        if open.is_empty() {
            return Ok(None);
        }
        let pick = open[rng.below(open.len() as u64) as usize];
        record.pairs[pick].consumed = true;
        let pair = record.pairs[pick];
        self.persist()?;
        Ok(Some(pair))
    }

    pub fn persist(&self) -> Result<(), ProtocolError> {
        match &self.path {
            Some(p) => self.save(p),
            None => Ok(()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ProtocolError> {
        let io_err = |source| ProtocolError::Io {
            path: path.to_path_buf(),
            source,
        };
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, self.to_csv()).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for r in self.records.values() {
            for p in &r.pairs {
                w.write_record([
                    r.sn.to_string(),
                    p.index.to_string(),
                    format!("{:016x}", p.x),
                    format!("{:016x}", p.y),
                    u8::from(p.consumed).to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn parse_csv(text: &str) -> Result<Self, ProtocolError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        let mut records: BTreeMap<u64, UirRecord> = BTreeMap::new();
        let mut seen: HashSet<(u64, u16)> = HashSet::new();
        for (n, row) in reader.records().enumerate() {
            let row = row.map_err(|e| ProtocolError::ParseError {
                line: e.position().map_or(n as u64 + 1, |p| p.line()),
                column: 1,
                message: e.to_string(),
            })?;
            let line = row.position().map_or(n as u64 + 1, |p| p.line());
            let fail = |column: usize, message: String| ProtocolError::ParseError { line, column, message };
            if n == 0 {
                if row.iter().ne(CSV_HEADER) {
                    return Err(fail(1, format!("expected header {}", CSV_HEADER.join(","))));
                }
                continue;
            }
            if row.len() != CSV_HEADER.len() {
                return Err(fail(row.len().min(CSV_HEADER.len()) + 1, format!("expected 5 fields, found {}", row.len())));
            }
            let sn: u64 = row[0].parse().map_err(|e| fail(1, format!("serial: {e}")))?;
            let index: u16 = row[1].parse().map_err(|e| fail(2, format!("index: {e}")))?;
            let hex = |col: usize| -> Result<u64, ProtocolError> {
                let f = &row[col];
                if f.len() != 16 {
                    return Err(fail(col + 1, format!("expected 16 hex digits, found {f:?}")));
                }
                u64::from_str_radix(f, 16).map_err(|e| fail(col + 1, format!("{e}")))
            };
            let x = hex(2)?;
            let y = hex(3)?;
            let consumed = match &row[4] {
                "0" => false,
                "1" => true,
                other => return Err(fail(5, format!("consumed flag must be 0 or 1, found {other:?}"))),
            };
            if !seen.insert((sn, index)) {
                return Err(ProtocolError::DuplicateIndex { sn, index });
            }
            records
                .entry(sn)
                .or_insert_with(|| UirRecord { sn, pairs: Vec::new() })
                .pairs
                .push(ChallengePair { index, x, y, consumed });
        }
        for r in records.values_mut() {
            r.pairs.sort_by_key(|p| p.index);
        }
        Ok(UirStore { records, path: None })
    }
}

/// One identification round. `channel` carries the challenge `y` to the
/// device and returns its answer.
pub fn identify(
    store: &mut UirStore,
    sn: u64,
    rng: &mut Trng,
    mut channel: impl FnMut(u64) -> Result<u64, ProtocolError>,
) -> Result<Outcome, ProtocolError> {
    let Some(pair) = store.reserve(sn, rng)? else {
        return Ok(Outcome::Exhausted);
    };
    Ok(if channel(pair.y)? == pair.x {
        Outcome::Accepted
    } else {
        Outcome::Rejected
    })
}

pub fn write_frame(w: &mut impl Write, kind: u8, payload: &[u8]) -> Result<(), ProtocolError> {
    let len = u16::try_from(payload.len()).map_err(|_| ProtocolError::ProtocolViolation("frame too long".into()))?;
    let mut buf = Vec::with_capacity(3 + payload.len());
    buf.push(kind);
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(payload);
    w.write_all(&buf).map_err(net_error)?;
    w.flush().map_err(net_error)
}

pub fn read_frame(r: &mut impl Read) -> Result<(u8, Vec<u8>), ProtocolError> {
    let mut head = [0u8; 3];
    r.read_exact(&mut head).map_err(net_error)?;
    let mut payload = vec![0u8; usize::from(u16::from_le_bytes([head[1], head[2]]))];
    r.read_exact(&mut payload).map_err(net_error)?;
    Ok((head[0], payload))
}

fn net_error(e: io::Error) -> ProtocolError {
    match e.kind() {
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => ProtocolError::Timeout,
        _ => ProtocolError::Network(e),
    }
}

fn expect_frame<const N: usize>(r: &mut impl Read, kind: u8, name: &str) -> Result<[u8; N], ProtocolError> {
    let (got, payload) = read_frame(r)?;
    if got != kind {
        return Err(ProtocolError::ProtocolViolation(format!(
            "expected {name} frame 0x{kind:02x}, got 0x{got:02x}"
        )));
    }
    payload.try_into().map_err(|p: Vec<u8>| {
        ProtocolError::ProtocolViolation(format!("{name} payload is {} bytes, expected {N}", p.len()))
    })
}

fn configure(stream: &TcpStream) -> io::Result<()> {
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    stream.set_nodelay(true)
}

struct TaState {
    store: UirStore,
    rng: Trng,
}

/// Trusted-authority server. Each connection gets a thread; the store and
/// challenge RNG are shared behind one lock.
pub struct TaServer {
    listener: TcpListener,
    state: Arc<Mutex<TaState>>,
}

/// What the server saw in one session.
#[derive(Debug)]
pub struct SessionReport {
    pub peer: Option<SocketAddr>,
    pub sn: Option<u64>,
    pub result: Result<Outcome, ProtocolError>,
}

impl TaServer {
    pub fn bind(addr: &str, store: UirStore, rng: Trng) -> Result<Self, ProtocolError> {
        let listener = TcpListener::bind(addr).map_err(|source| ProtocolError::BindFailure {
            addr: addr.to_string(),
            source,
        })?;
        Ok(TaServer {
            listener,
            state: Arc::new(Mutex::new(TaState { store, rng })),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ProtocolError> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until `max_sessions` have been handled (or
    /// forever), reporting each finished session.
    pub fn serve(
        self,
        max_sessions: Option<usize>,
        report: impl Fn(SessionReport) + Send + Sync + 'static,
    ) -> Result<(), ProtocolError> {
        let report = Arc::new(report);
        let mut workers = Vec::new();
        for (n, conn) in self.listener.incoming().enumerate() {
            let stream = conn?;
            let state = Arc::clone(&self.state);
            let report = Arc::clone(&report);
            workers.push(thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                let mut sn = None;
                let result = serve_session(stream, &state, &mut sn);
                report(SessionReport { peer, sn, result });
            }));
            workers.retain(|w| !w.is_finished());
            if max_sessions.is_some_and(|m| n + 1 >= m) {
                break;
            }
        }
        for w in workers {
            let _ = w.join();
        }
        Ok(())
    }
}

fn serve_session(mut stream: TcpStream, state: &Mutex<TaState>, sn_out: &mut Option<u64>) -> Result<Outcome, ProtocolError> {
    configure(&stream)?;
    ta_session(&mut stream, sn_out, |sn| {
        let mut guard = state.lock().unwrap_or_else(|e| e.into_inner());
        let TaState { store, rng } = &mut *guard;
        store.reserve(sn, rng)
    })
}

/// Authority side of one session over any byte stream. `reserve` is asked
/// for a pair once the device has announced its serial, which is also
/// written to `sn_out`.
pub fn ta_session<S: Read + Write>(
    stream: &mut S,
    sn_out: &mut Option<u64>,
    reserve: impl FnOnce(u64) -> Result<Option<ChallengePair>, ProtocolError>,
) -> Result<Outcome, ProtocolError> {
    let sn = u64::from_le_bytes(expect_frame::<8>(stream, FRAME_HELLO, "HELLO")?);
    *sn_out = Some(sn);
    let pair = match reserve(sn) {
        Ok(Some(p)) => p,
        Ok(None) => {
            write_frame(stream, FRAME_RESULT, &[RESULT_REJECT])?;
            return Ok(Outcome::Exhausted);
        }
        Err(e) => {
            write_frame(stream, FRAME_RESULT, &[RESULT_REJECT])?;
            return Err(e);
        }
    };
    write_frame(stream, FRAME_CHALLENGE, &pair.y.to_le_bytes())?;
    let x = u64::from_le_bytes(expect_frame::<8>(stream, FRAME_RESPONSE, "RESPONSE")?);
    let outcome = if x == pair.x { Outcome::Accepted } else { Outcome::Rejected };
    write_frame(stream, FRAME_RESULT, &[outcome.result_byte()])?;
    Ok(outcome)
}

/// Device side of one session over any byte stream: announce the serial,
/// answer one challenge, and return whether the authority accepted.
pub fn device_session<S: Read + Write>(
    stream: &mut S,
    sn: u64,
    mut respond: impl FnMut(u64) -> u64,
) -> Result<bool, ProtocolError> {
    write_frame(stream, FRAME_HELLO, &sn.to_le_bytes())?;
    let (kind, payload) = read_frame(stream)?;
    let result = match kind {
        FRAME_CHALLENGE => {
            let y: [u8; 8] = payload
                .try_into()
                .map_err(|_| ProtocolError::ProtocolViolation("CHALLENGE payload must be 8 bytes".into()))?;
            let x = respond(u64::from_le_bytes(y));
            write_frame(stream, FRAME_RESPONSE, &x.to_le_bytes())?;
            expect_frame::<1>(stream, FRAME_RESULT, "RESULT")?[0]
        }
        FRAME_RESULT if payload.len() == 1 => payload[0],
        other => {
            return Err(ProtocolError::ProtocolViolation(format!(
                "unexpected frame 0x{other:02x} after HELLO"
            )))
        }
    };
    match result {
        RESULT_ACCEPT => Ok(true),
        RESULT_REJECT => Ok(false),
        other => Err(ProtocolError::ProtocolViolation(format!("unknown result byte 0x{other:02x}"))),
    }
}

/// Device side of a session: dial the authority, announce the serial,
/// answer one challenge, and return whether the authority accepted.
pub fn connect_device(device: &SucInstance, sn: u64, addr: impl ToSocketAddrs) -> Result<bool, ProtocolError> {
    connect_with(sn, addr, |y| device_respond(device, y))
}

/// Like [`connect_device`] with an arbitrary responder, e.g. an impostor.
pub fn connect_with(sn: u64, addr: impl ToSocketAddrs, respond: impl FnMut(u64) -> u64) -> Result<bool, ProtocolError> {
    let mut stream = TcpStream::connect(addr)?;
    configure(&stream)?;
    device_session(&mut stream, sn, respond)
}

/// Lets the authority dial out instead: the device waits on `listener` and
/// runs one session per accepted connection, `sessions` times.
pub fn serve_device(
    device: &SucInstance,
    sn: u64,
    listener: &TcpListener,
    sessions: usize,
) -> Result<Vec<bool>, ProtocolError> {
    let mut verdicts = Vec::with_capacity(sessions);
    for conn in listener.incoming().take(sessions) {
        let mut stream = conn?;
        configure(&stream)?;
        verdicts.push(device_session(&mut stream, sn, |y| device_respond(device, y))?);
    }
    Ok(verdicts)
}

/// Authority dials a listening device and identifies it against `store`.
/// The device must announce the expected serial.
pub fn identify_remote(
    store: &mut UirStore,
    sn: u64,
    rng: &mut Trng,
    addr: impl ToSocketAddrs,
) -> Result<Outcome, ProtocolError> {
    let mut stream = TcpStream::connect(addr)?;
    configure(&stream)?;
    ta_session(&mut stream, &mut None, |announced| {
        if announced != sn {
            return Err(ProtocolError::ProtocolViolation(format!(
                "device announced serial {announced}, expected {sn}"
            )));
        }
        store.reserve(sn, rng)
    })
}
