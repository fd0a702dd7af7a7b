#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gridtsc::bridge::Session;
use gridtsc::{EpisodeConfig, ScenarioConfig};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn scenario_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn load(path: &Path) -> EpisodeConfig {
    ScenarioConfig::load(path)
        .and_then(|c| c.episode_config())
        .unwrap_or_else(|e| panic!("{e}"))
}

pub const GOLDEN_STEPS: usize = 20;

/// Requests of the recorded session: spec, reset, twenty steps, close.
pub fn golden_requests() -> Vec<String> {
    let mut r = vec![
        r#"{"type":"spec","protocol_version":"1"}"#.to_string(),
        r#"{"type":"reset","seed":11}"#.to_string(),
    ];
    for i in 0..GOLDEN_STEPS {
        r.push(format!(r#"{{"type":"step","action":{}}}"#, (i * 5 + 2) % 12));
    }
    r.push(r#"{"type":"close"}"#.to_string());
    r
}

/// Request and response lines interleaved, newline terminated.
pub fn transcript(requests: &[String], responses: &[String]) -> String {
    assert_eq!(requests.len(), responses.len());
    let mut out = String::new();
    for (q, a) in requests.iter().zip(responses) {
        out.push_str(q);
        out.push('\n');
        out.push_str(a);
        out.push('\n');
    }
    out
}

pub fn in_process_responses(cfg: &EpisodeConfig, requests: &[String]) -> Vec<String> {
    let mut s = Session::new(cfg.clone()).unwrap();
    requests.iter().map(|q| s.handle(q).to_line()).collect()
}
