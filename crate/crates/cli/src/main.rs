use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use suc_core::analysis::{
    active_sbox_summary, avalanche_by_round, avalanche_control, bound_report, class_avalanche, emit_csv, CsvTable,
};
use suc_core::genie::{build_template, load_device, lock, personalize, VirtualBitstream};
use suc_core::protocol::{
    connect_device, device_respond, enroll, identify, identify_remote, serve_device, Outcome, TaServer,
};
use suc_core::sbox::{enumerate_involutive_optimal, write_catalog};
use suc_core::trng::parse_seed_hex;
use suc_core::{CipherKind, ProtocolError, SBox4, SucInstance, Trng, UirStore};

const EXIT_REJECTED: u8 = 1;
const EXIT_DATA: u8 = 3;
const EXIT_NETWORK: u8 = 4;

#[derive(Parser)]
#[command(name = "suc", version, about = "Forge, enroll and identify secret unknown cipher devices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EntropySource {
    Os,
}

#[derive(Args)]
struct Entropy {
    /// 64 hex digits seeding the deterministic TRNG
    #[arg(long, value_parser = seed_arg, required_unless_present = "entropy", conflicts_with = "entropy")]
    seed: Option<[u8; 32]>,
    /// Seed from the operating system instead
    #[arg(long, value_enum)]
    entropy: Option<EntropySource>,
}

impl Entropy {
    fn trng(&self) -> Trng {
        match self.seed {
            Some(seed) => Trng::from_seed(seed),
            None => Trng::from_os_entropy(),
        }
    }
}

fn seed_arg(s: &str) -> Result<[u8; 32], String> {
    parse_seed_hex(s).map_err(|e| e.to_string())
}

fn kind_arg(s: &str) -> Result<CipherKind, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Build the shared template bitstream
    Forge {
        #[arg(long, value_parser = kind_arg)]
        kind: CipherKind,
        /// Opaque application configuration to embed
        #[arg(long)]
        payload: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill a template's regions from the TRNG
    Personalize {
        /// Template to personalize; a payload-free template when omitted
        #[arg(long = "in", required_unless_present = "kind")]
        input: Option<PathBuf>,
        /// Expected cipher kind
        #[arg(long, value_parser = kind_arg)]
        kind: Option<CipherKind>,
        #[command(flatten)]
        entropy: Entropy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Set the reconfiguration lock
    Lock {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a bitstream's directory and re-check its S-boxes
    Inspect { bitstream: PathBuf },
    /// Record challenge/response pairs for a device
    Enroll {
        #[arg(long)]
        device: PathBuf,
        #[arg(long)]
        sn: u64,
        #[arg(long)]
        pairs: usize,
        #[arg(long)]
        uir: PathBuf,
        #[command(flatten)]
        entropy: Entropy,
    },
    /// Identify a device once, locally or by dialing a listening device
    Identify {
        #[arg(long)]
        uir: PathBuf,
        #[arg(long)]
        sn: u64,
        #[arg(long, required_unless_present = "connect", conflicts_with = "connect")]
        device: Option<PathBuf>,
        #[arg(long)]
        connect: Option<String>,
        #[command(flatten)]
        entropy: Entropy,
    },
    /// Run the trusted authority over TCP
    ServeTa {
        #[arg(long)]
        uir: PathBuf,
        #[arg(long)]
        listen: String,
        /// Stop after this many sessions
        #[arg(long)]
        sessions: Option<usize>,
        #[command(flatten)]
        entropy: Entropy,
    },
    /// Act as a device: dial the authority, or wait for it
    Device {
        #[arg(long)]
        bitstream: PathBuf,
        #[arg(long)]
        sn: u64,
        #[arg(long, required_unless_present = "listen", conflicts_with = "listen")]
        connect: Option<String>,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long, default_value_t = 1, requires = "listen")]
        sessions: usize,
    },
    /// Statistical experiments and bound calculators
    #[command(subcommand)]
    Analyze(Analyze),
    /// S-box utilities
    #[command(subcommand)]
    Sbox(SboxCmd),
}

#[derive(Subcommand)]
enum Analyze {
    /// Per-round Hamming distance after a single-bit flip
    Avalanche {
        #[arg(long, value_parser = kind_arg)]
        kind: CipherKind,
        #[arg(long, default_value_t = 1)]
        instances: usize,
        #[arg(long, default_value_t = 1000)]
        inputs: usize,
        /// Flip nothing; every distance must be 0
        #[arg(long)]
        control: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        entropy: Entropy,
    },
    /// Full-cipher distance envelopes over many instances
    Class {
        #[arg(long, value_parser = kind_arg)]
        kind: CipherKind,
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 100)]
        msgs: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        entropy: Entropy,
    },
    /// Counting and complexity bounds as key=value lines
    Bounds {
        #[arg(long, value_parser = kind_arg)]
        kind: CipherKind,
        #[arg(long, default_value_t = 64)]
        block_bits: u32,
        #[arg(long, default_value_t = 30)]
        rounds: u32,
        #[arg(long, default_value_t = 10)]
        perfect_bits: u32,
    },
    /// Two-round active S-box minima
    ActiveSboxes,
}

#[derive(Subcommand)]
enum SboxCmd {
    /// Enumerate all optimal involutive 4-bit S-boxes
    EnumerateInvolutive {
        /// Also write the catalog cache file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the properties of one S-box given as 16 hex digits
    Check { table: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("suc: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(p) = cause.downcast_ref::<ProtocolError>() {
            return match p {
                ProtocolError::Network(_)
                | ProtocolError::Timeout
                | ProtocolError::BindFailure { .. }
                | ProtocolError::ProtocolViolation(_) => EXIT_NETWORK,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn read_bitstream(path: &Path) -> Result<VirtualBitstream> {
    Ok(VirtualBitstream::read(path)?)
}

fn read_device(path: &Path) -> Result<SucInstance> {
    let bs = read_bitstream(path)?;
    load_device(&bs).with_context(|| format!("{}", path.display()))
}

fn verdict(outcome: Outcome) -> u8 {
    let label = match outcome {
        Outcome::Accepted => "accepted",
        Outcome::Rejected => "rejected",
        Outcome::Exhausted => "exhausted",
    };
    println!("result={label}");
    if outcome.is_accepted() {
        0
    } else {
        EXIT_REJECTED
    }
}

fn write_or_print(table: &impl CsvTable, csv: Option<&Path>) -> Result<()> {
    match csv {
        Some(path) => Ok(emit_csv(table, path)?),
        None => {
            print!("{}", table.to_csv());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Forge { kind, payload, out } => {
            let bytes = match &payload {
                Some(p) => fs::read(p).with_context(|| format!("{}", p.display()))?,
                None => Vec::new(),
            };
            let bs = build_template(&bytes, kind)?;
            bs.write(&out)?;
            println!("kind={kind} body_bytes={}", bs.body.len());
        }
        Command::Personalize {
            input,
            kind,
            entropy,
            out,
        } => {
            let template = match (&input, kind) {
                (Some(path), _) => read_bitstream(path)?,
                (None, Some(kind)) => build_template(&[], kind)?,
                (None, None) => unreachable!("clap requires --in or --kind"),
            };
            if let Some(kind) = kind {
                let found = template.kind()?;
                if found != kind {
                    bail!("template holds a {found} device, not {kind}");
                }
            }
            let (bs, ledger) = personalize(&template, &mut entropy.trng())?;
            bs.write(&out)?;
            println!("entropy_bytes={}", ledger.total_bytes);
            println!("selection_bits={}", ledger.selection_bits);
            println!("key_bits={}", ledger.key_bits);
            println!("drawn_bits={}", ledger.drawn_bits);
        }
        Command::Lock { input, out } => {
            let bs = lock(&read_bitstream(&input)?)?;
            bs.write(&out)?;
            println!("locked=true");
        }
        Command::Inspect { bitstream } => inspect(&read_bitstream(&bitstream)?),
        Command::Enroll {
            device,
            sn,
            pairs,
            uir,
            entropy,
        } => {
            let dev = read_device(&device)?;
            let mut store = UirStore::open(&uir)?;
            let record = enroll(&dev, sn, pairs, &mut entropy.trng())?;
            store.insert(record)?;
            println!("sn={sn} pairs={pairs} kind={}", dev.kind());
        }
        Command::Identify {
            uir,
            sn,
            device,
            connect,
            entropy,
        } => {
            let mut store = UirStore::open(&uir)?;
            let mut rng = entropy.trng();
            let outcome = match (device, connect) {
                (Some(path), _) => {
                    let dev = read_device(&path)?;
                    identify(&mut store, sn, &mut rng, |y| Ok(device_respond(&dev, y)))?
                }
                (None, Some(addr)) => identify_remote(&mut store, sn, &mut rng, addr.as_str())?,
                (None, None) => unreachable!("clap requires one of --device/--connect"),
            };
            return Ok(verdict(outcome));
        }
        Command::ServeTa {
            uir,
            listen,
            sessions,
            entropy,
        } => {
            let store = UirStore::open(&uir)?;
            let server = TaServer::bind(&listen, store, entropy.trng())?;
            println!("listening={}", server.local_addr()?);
            std::io::stdout().flush()?;
            server.serve(sessions, |r| {
                let sn = r.sn.map_or("-".to_string(), |s| s.to_string());
                match r.result {
                    Ok(o) => println!("session sn={sn} outcome={o:?}"),
                    Err(e) => println!("session sn={sn} error={e}"),
                }
                let _ = std::io::stdout().flush();
            })?;
        }
        Command::Device {
            bitstream,
            sn,
            connect,
            listen,
            sessions,
        } => {
            let dev = read_device(&bitstream)?;
            let verdicts = match (connect, listen) {
                (Some(addr), _) => vec![connect_device(&dev, sn, addr.as_str())?],
                (None, Some(addr)) => {
                    let listener = TcpListener::bind(&addr).map_err(|source| ProtocolError::BindFailure {
                        addr: addr.clone(),
                        source,
                    })?;
                    println!("listening={}", listener.local_addr()?);
                    std::io::stdout().flush()?;
                    serve_device(&dev, sn, &listener, sessions)?
                }
                (None, None) => unreachable!("clap requires one of --connect/--listen"),
            };
            for &v in &verdicts {
                println!("result={}", if v { "accepted" } else { "rejected" });
            }
            return Ok(if verdicts.iter().all(|&v| v) { 0 } else { EXIT_REJECTED });
        }
        Command::Analyze(a) => analyze(a)?,
        Command::Sbox(s) => return sbox(s),
    }
    Ok(0)
}

fn inspect(bs: &VirtualBitstream) {
    println!("format_version={}", bs.version);
    println!("locked={}", bs.is_locked());
    println!("encrypted_flag={}", bs.flags & suc_core::genie::FLAG_ENCRYPTED != 0);
    if let Ok(kind) = bs.kind() {
        println!("kind={kind}");
    }
    println!("body_bytes={}", bs.body.len());
    for e in &bs.directory {
        println!(
            "template id={} kind={:?} offset={} length={}",
            e.template_id, e.kind, e.offset, e.length
        );
    }
    match load_device(bs) {
        Ok(dev) => {
            let s = dev.sboxes();
            println!("personalized=true");
            println!("sboxes_optimal={}/16", s.iter().filter(|s| s.is_optimal()).count());
            println!("sboxes_involutive={}/16", s.iter().filter(|s| s.is_involution()).count());
            println!(
                "sboxes_single_bit_diffusion={}/16",
                s.iter().filter(|s| s.has_single_bit_diffusion()).count()
            );
        }
        Err(e) => {
            println!("personalized=false");
            println!("load_error={e}");
        }
    }
}

fn analyze(a: Analyze) -> Result<()> {
    match a {
        Analyze::Avalanche {
            kind,
            instances,
            inputs,
            control,
            csv,
            entropy,
        } => {
            let mut rng = entropy.trng();
            let report = if control {
                avalanche_control(kind, instances, inputs, &mut rng)?
            } else {
                avalanche_by_round(kind, instances, inputs, &mut rng)?
            };
            write_or_print(&report, csv.as_deref())?;
            if csv.is_some() {
                println!("saturation_round={:?}", report.saturation_round(30.0, 34.0));
            }
        }
        Analyze::Class {
            kind,
            instances,
            msgs,
            csv,
            entropy,
        } => {
            let report = class_avalanche(kind, instances, msgs, &mut entropy.trng())?;
            write_or_print(&report, csv.as_deref())?;
            if csv.is_some() {
                let (lo, hi) = report.mean_range();
                let (plo, phi) = suc_core::ClassAvalancheReport::reported_envelope(kind);
                println!("mean_range={lo:.3},{hi:.3}");
                println!("inside_reported_envelope={}/{} ({plo}..{phi})", report.within(plo, phi), instances);
            }
        }
        Analyze::Bounds {
            kind,
            block_bits,
            rounds,
            perfect_bits,
        } => print!("{}", bound_report(kind, block_bits, rounds, perfect_bits)?.to_key_value()),
        Analyze::ActiveSboxes => print!("{}", active_sbox_summary()),
    }
    Ok(())
}

fn sbox(cmd: SboxCmd) -> Result<u8> {
    match cmd {
        SboxCmd::EnumerateInvolutive { out } => {
            let start = Instant::now();
            let set = enumerate_involutive_optimal();
            println!("count={}", set.len());
            eprintln!("elapsed_s={:.1}", start.elapsed().as_secs_f64());
            if let Some(path) = out {
                write_catalog(&path, &set)?;
            }
        }
        SboxCmd::Check { table } => {
            let digits: Vec<u8> = table
                .chars()
                .map(|c| c.to_digit(16).map(|d| d as u8))
                .collect::<Option<_>>()
                .context("S-box table must be hex digits")?;
            if digits.len() != 16 {
                bail!("S-box table must have 16 hex digits, got {}", digits.len());
            }
            let s = SBox4::from_slice(&digits)?;
            println!("bijective={}", s.is_bijective());
            println!("lin={}", s.lin_table().lin());
            println!("diff={}", s.diff_table().diff());
            println!("nonlinearity={}", s.lin_table().nonlinearity());
            println!("optimal={}", s.is_optimal());
            println!("involution={}", s.is_involution());
            println!("single_bit_diffusion={}", s.has_single_bit_diffusion());
        }
    }
    Ok(0)
}
