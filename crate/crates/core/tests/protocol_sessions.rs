mod common;

use std::io::Write;
use std::net::TcpStream;
use std::sync::mpsc;
use std::thread;

use suc_core::genie::sample_instance;
use suc_core::protocol::{
    connect_device, connect_with, device_respond, enroll, identify, read_frame, write_frame, Outcome, ProtocolError,
    SessionReport, TaServer, UirStore, FRAME_CHALLENGE, FRAME_HELLO, FRAME_RESPONSE,
};
use suc_core::{CipherKind, SucInstance, Trng};

fn device(kind: CipherKind, seed: u64) -> SucInstance {
    common::init_catalog_cache();
    sample_instance(kind, &mut Trng::from_u64(seed)).unwrap()
}

fn spawn_server(store: UirStore, seed: u64, sessions: usize) -> (String, mpsc::Receiver<SessionReport>, thread::JoinHandle<()>) {
    let server = TaServer::bind("127.0.0.1:0", store, Trng::from_u64(seed)).unwrap();
    let addr = server.local_addr().unwrap().to_string();
    let (tx, rx) = mpsc::channel();
    let tx = std::sync::Mutex::new(tx);
    let handle = thread::spawn(move || {
        server
            .serve(Some(sessions), move |r| tx.lock().unwrap().send(r).unwrap())
            .unwrap()
    });
    (addr, rx, handle)
}

#[test]
fn loopback_accepts_the_enrolled_device() {
    for kind in CipherKind::ALL {
        let dev = device(kind, 1);
        let mut store = UirStore::new();
        store.insert(enroll(&dev, 10, 4, &mut Trng::from_u64(2)).unwrap()).unwrap();
        let (addr, rx, h) = spawn_server(store, 3, 2);
        assert!(connect_device(&dev, 10, &addr).unwrap());
        let impostor = device(kind, 2);
        assert!(!connect_device(&impostor, 10, &addr).unwrap());
        h.join().unwrap();
        let mut outcomes: Vec<Outcome> = rx.iter().map(|r| r.result.unwrap()).collect();
        outcomes.sort_by_key(|o| *o as u8);
        assert_eq!(outcomes, [Outcome::Accepted, Outcome::Rejected]);
    }
}

#[test]
fn unknown_and_exhausted_serials_are_refused() {
    let dev = device(CipherKind::I, 4);
    let mut store = UirStore::new();
    store.insert(enroll(&dev, 1, 1, &mut Trng::from_u64(2)).unwrap()).unwrap();
    let (addr, rx, h) = spawn_server(store, 3, 3);
    assert!(connect_device(&dev, 1, &addr).unwrap());
    assert!(!connect_device(&dev, 1, &addr).unwrap());
    assert!(!connect_device(&dev, 2, &addr).unwrap());
    h.join().unwrap();
    let reports: Vec<SessionReport> = rx.iter().collect();
    assert!(reports.iter().any(|r| matches!(r.result, Ok(Outcome::Exhausted))));
    assert!(reports.iter().any(|r| matches!(r.result, Err(ProtocolError::UnknownSerial(2)))));
}

#[test]
fn wrong_length_response_is_a_protocol_violation() {
    let dev = device(CipherKind::Ni, 5);
    let mut store = UirStore::new();
    store.insert(enroll(&dev, 9, 2, &mut Trng::from_u64(2)).unwrap()).unwrap();
    let (addr, rx, h) = spawn_server(store, 3, 1);
    let mut s = TcpStream::connect(&addr).unwrap();
    write_frame(&mut s, FRAME_HELLO, &9u64.to_le_bytes()).unwrap();
    let (kind, payload) = read_frame(&mut s).unwrap();
    assert_eq!((kind, payload.len()), (FRAME_CHALLENGE, 8));
    write_frame(&mut s, FRAME_RESPONSE, &[0; 5]).unwrap();
    s.flush().unwrap();
    h.join().unwrap();
    let report = rx.recv().unwrap();
    assert!(matches!(report.result, Err(ProtocolError::ProtocolViolation(_))));
    assert_eq!(report.sn, Some(9));
}

#[test]
fn successive_sessions_use_different_pairs_and_persist() {
    let dev = device(CipherKind::I, 6);
    let dir = common::tmp_dir();
    let path = dir.path().join("uir.csv");
    let mut store = UirStore::open(&path).unwrap();
    store.insert(enroll(&dev, 77, 8, &mut Trng::from_u64(2)).unwrap()).unwrap();
    let (addr, _rx, h) = spawn_server(store, 3, 2);
    assert!(connect_device(&dev, 77, &addr).unwrap());
    let after_one = UirStore::load(&path).unwrap();
    assert_eq!(after_one.get(77).unwrap().remaining(), 7);
    assert!(connect_device(&dev, 77, &addr).unwrap());
    h.join().unwrap();
    let after_two = UirStore::load(&path).unwrap();
    let used: Vec<u16> = after_two.get(77).unwrap().pairs.iter().filter(|p| p.consumed).map(|p| p.index).collect();
    assert_eq!(used.len(), 2);
}

#[test]
fn tcp_and_in_process_agree() {
    let dev = device(CipherKind::Ni, 7);
    let impostor = device(CipherKind::Ni, 8);
    let record = enroll(&dev, 5, 16, &mut Trng::from_u64(2)).unwrap();
    let responders: [&SucInstance; 4] = [&dev, &impostor, &dev, &impostor];

    let mut local = UirStore::new();
    local.insert(record.clone()).unwrap();
    let mut rng = Trng::from_u64(42);
    let local_verdicts: Vec<bool> = responders
        .iter()
        .map(|d| identify(&mut local, 5, &mut rng, |y| Ok(device_respond(d, y))).unwrap().is_accepted())
        .collect();

    let dir = common::tmp_dir();
    let path = dir.path().join("uir.csv");
    let mut remote = UirStore::open(&path).unwrap();
    remote.insert(record).unwrap();
    let (addr, _rx, h) = spawn_server(remote, 42, 4);
    let tcp_verdicts: Vec<bool> = responders.iter().map(|d| connect_device(d, 5, &addr).unwrap()).collect();
    h.join().unwrap();

    assert_eq!(local_verdicts, tcp_verdicts);
    assert_eq!(local_verdicts, [true, false, true, false]);
    let remote = UirStore::load(&path).unwrap();
    assert_eq!(remote.get(5), local.get(5));
}

#[test]
fn random_responder_over_tcp_is_rejected() {
    let dev = device(CipherKind::I, 9);
    let mut store = UirStore::new();
    store.insert(enroll(&dev, 3, 64, &mut Trng::from_u64(2)).unwrap()).unwrap();
    let (addr, _rx, h) = spawn_server(store, 3, 64);
    let mut guess = Trng::from_u64(5);
    for _ in 0..64 {
        assert!(!connect_with(3, &addr, |_| guess.bits(64)).unwrap());
    }
    h.join().unwrap();
}

#[test]
fn bind_failure_is_reported() {
    let first = TaServer::bind("127.0.0.1:0", UirStore::new(), Trng::from_u64(1)).unwrap();
    let addr = first.local_addr().unwrap().to_string();
    assert!(matches!(
        TaServer::bind(&addr, UirStore::new(), Trng::from_u64(1)),
        Err(ProtocolError::BindFailure { .. })
    ));
}

#[test]
fn authority_can_dial_a_listening_device() {
    use std::net::TcpListener;
    use suc_core::protocol::{identify_remote, serve_device};

    let dev = device(CipherKind::I, 11);
    let mut store = UirStore::new();
    store.insert(enroll(&dev, 31, 4, &mut Trng::from_u64(2)).unwrap()).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let dev2 = dev.clone();
    let h = thread::spawn(move || serve_device(&dev2, 31, &listener, 2).unwrap());
    let mut rng = Trng::from_u64(3);
    assert_eq!(identify_remote(&mut store, 31, &mut rng, addr).unwrap(), Outcome::Accepted);
    // the device announces 31, so asking for another serial is a violation
    store.insert(enroll(&dev, 32, 1, &mut Trng::from_u64(2)).unwrap()).unwrap();
    assert!(matches!(
        identify_remote(&mut store, 32, &mut rng, addr),
        Err(ProtocolError::ProtocolViolation(_))
    ));
    assert_eq!(h.join().unwrap(), [true, false]);
    assert_eq!(store.get(31).unwrap().remaining(), 3);
    assert_eq!(store.get(32).unwrap().remaining(), 1);
}
