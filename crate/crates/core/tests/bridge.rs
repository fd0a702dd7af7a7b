mod common;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use gridtsc::bridge::{Response, Server};
use gridtsc::{ActionId, TscEnv};

use common::*;

fn start_server(cfg: gridtsc::EpisodeConfig) -> (String, Arc<AtomicBool>, thread::JoinHandle<()>) {
    let server = Server::bind("127.0.0.1:0", cfg).unwrap();
    let addr = server.local_addr().unwrap().to_string();
    let flag = Arc::new(AtomicBool::new(false));
    let f = Arc::clone(&flag);
    let h = thread::spawn(move || server.run(f).unwrap());
    (addr, flag, h)
}

fn exchange(stream: &mut TcpStream, reader: &mut BufReader<TcpStream>, line: &str) -> String {
    stream.write_all(line.as_bytes()).unwrap();
    stream.write_all(b"\n").unwrap();
    let mut resp = String::new();
    reader.read_line(&mut resp).unwrap();
    resp.trim_end_matches('\n').to_string()
}

#[test]
fn golden_transcript_matches() {
    let cfg = load(&fixture("golden_scenario.toml"));
    let requests = golden_requests();
    let produced = transcript(&requests, &in_process_responses(&cfg, &requests));
    let path = fixture("golden_session.jsonl");
    if std::env::var_os("GRIDTSC_BLESS").is_some() {
        fs::write(&path, &produced).unwrap();
    }
    let expected = fs::read_to_string(&path).expect("golden fixture present (GRIDTSC_BLESS=1 regenerates)");
    assert_eq!(
        produced, expected,
        "in-process session drifted from the golden transcript"
    );
}

#[test]
fn tcp_session_reproduces_golden_bytes() {
    let cfg = load(&fixture("golden_scenario.toml"));
    let expected = fs::read_to_string(fixture("golden_session.jsonl")).unwrap();
    let (addr, flag, h) = start_server(cfg);
    let mut stream = TcpStream::connect(&addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let requests = golden_requests();
    let responses: Vec<String> = requests
        .iter()
        .map(|q| exchange(&mut stream, &mut reader, q))
        .collect();
    assert_eq!(transcript(&requests, &responses), expected);
    flag.store(true, Ordering::SeqCst);
    h.join().unwrap();
}

#[test]
fn concurrent_sessions_are_independent() {
    let cfg = load(&fixture("golden_scenario.toml"));
    let (addr, flag, h) = start_server(cfg.clone());
    let workers: Vec<_> = (0..4u64)
        .map(|k| {
            let addr = addr.clone();
            let cfg = cfg.clone();
            thread::spawn(move || {
                let mut stream = TcpStream::connect(&addr).unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut env = TscEnv::new(cfg).unwrap();
                let obs = env.reset_with_seed(Some(k)).unwrap();
                let r: Response = serde_json::from_str(&exchange(
                    &mut stream,
                    &mut reader,
                    &format!(r#"{{"type":"reset","seed":{k}}}"#),
                ))
                .unwrap();
                assert_eq!(r.obs.unwrap(), obs.to_vec_u32());
                for i in 0..30usize {
                    let a = (i * (k as usize + 1)) % 12;
                    let line = exchange(
                        &mut stream,
                        &mut reader,
                        &format!(r#"{{"type":"step","action":{a}}}"#),
                    );
                    let r: Response = serde_json::from_str(&line).unwrap();
                    let local = env.step(ActionId(a)).unwrap();
                    assert_eq!(r.obs.unwrap(), local.obs.to_vec_u32());
                    assert_eq!(r.reward.unwrap().to_bits(), local.reward.to_bits());
                    assert_eq!(r.done.unwrap(), local.done);
                }
            })
        })
        .collect();
    for w in workers {
        w.join().unwrap();
    }
    flag.store(true, Ordering::SeqCst);
    h.join().unwrap();
}

#[test]
fn shutdown_notifies_open_sessions() {
    let cfg = load(&fixture("golden_scenario.toml"));
    let (addr, flag, h) = start_server(cfg);
    let mut stream = TcpStream::connect(&addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let spec = exchange(&mut stream, &mut reader, r#"{"type":"spec"}"#);
    assert!(spec.contains(r#""type":"spec""#));
    flag.store(true, Ordering::SeqCst);
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    let r: Response = serde_json::from_str(&line).unwrap();
    assert_eq!(r.kind, "closed");
    assert_eq!(r.reason.as_deref(), Some("shutdown"));
    h.join().unwrap();
}
