//! Newline-delimited JSON wire protocol exposing one [`TscEnv`] per session.
//!
//! Requests:
//!
//! ```text
//! {"type":"spec"}
//! {"type":"reset","seed":7}
//! {"type":"step","action":3}
//! {"type":"close"}
//! ```
//!
//! Any request may carry `"protocol_version":"1"`; a different value is
//! rejected. Every request gets exactly one response line, and every
//! response carries `protocol_version`. Errors look like
//! `{"type":"error","protocol_version":"1","error":{"code":"invalid_action","message":"..."}}`
//! and never change environment state.

mod server;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use server::{serve_stdio, serve_stream, Endpoint, Server, SessionEnd};

use crate::env::{ActionId, EpisodeConfig, StepInfo, TscEnv};
use crate::error::{Error, Result};
use crate::reward::RewardVariant;

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// not JSON, unknown type, or missing/ill-typed fields
    Malformed,
    VersionMismatch,
    /// step before reset or after the episode ended
    ProtocolState,
    InvalidAction,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    #[serde(rename = "L")]
    pub links: usize,
    #[serde(rename = "M")]
    pub intersections: usize,
    pub action_count: usize,
    pub t_c: u64,
    pub control_steps: u64,
    pub queue_bounds: [u32; 2],
    pub split_bounds: [u32; 2],
    pub delta_s: u32,
    pub reward_variant: RewardVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetInfo {
    pub sim_time: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Info {
    Step(Box<StepInfo>),
    Reset(ResetInfo),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    #[serde(rename = "type")]
    pub kind: String,
    pub protocol_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obs: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub done: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub info: Option<Info>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<EnvSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Response {
    fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            protocol_version: PROTOCOL_VERSION.to_string(),
            obs: None,
            reward: None,
            done: None,
            info: None,
            spec: None,
            error: None,
            reason: None,
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            error: Some(WireError {
                code,
                message: message.into(),
            }),
            ..Self::new("error")
        }
    }

    pub fn closed(reason: &str) -> Self {
        Self {
            reason: Some(reason.to_string()),
            ..Self::new("closed")
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("responses always serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Request {
    Spec,
    Reset(Option<u64>),
    Step(usize),
    Close,
}

fn wire_error(code: ErrorCode, message: String) -> WireError {
    WireError { code, message }
}

fn parse_request(line: &str) -> std::result::Result<Request, WireError> {
    let malformed = |m: String| wire_error(ErrorCode::Malformed, m);
    let v: Value = serde_json::from_str(line).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let obj = v
        .as_object()
        .ok_or_else(|| malformed("request must be a JSON object".into()))?;
    if let Some(pv) = obj.get("protocol_version") {
        if pv.as_str() != Some(PROTOCOL_VERSION) {
            return Err(wire_error(
                ErrorCode::VersionMismatch,
                format!("server speaks protocol {PROTOCOL_VERSION}, client sent {pv}"),
            ));
        }
    }
    let uint = |key: &str| -> std::result::Result<Option<u64>, WireError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(x) => x
                .as_u64()
                .map(Some)
                .ok_or_else(|| malformed(format!("`{key}` must be a non-negative integer"))),
        }
    };
    match obj.get("type").and_then(Value::as_str) {
        Some("spec") => Ok(Request::Spec),
        Some("reset") => Ok(Request::Reset(uint("seed")?)),
        Some("step") => match uint("action")? {
            Some(a) => Ok(Request::Step(a as usize)),
            None => Err(malformed("step needs an integer `action`".into())),
        },
        Some("close") => Ok(Request::Close),
        Some(other) => Err(malformed(format!("unknown request type `{other}`"))),
        None => Err(malformed("missing string field `type`".into())),
    }
}

/// One client session: a private environment plus the request handler.
#[derive(Debug)]
pub struct Session {
    env: TscEnv,
    closed: bool,
}

impl Session {
    pub fn new(cfg: EpisodeConfig) -> Result<Self> {
        Ok(Self {
            env: TscEnv::new(cfg)?,
            closed: false,
        })
    }

    pub fn env(&self) -> &TscEnv {
        &self.env
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn spec(&self) -> EnvSpec {
        let cfg = self.env.config();
        let c = &cfg.scenario.constants;
        EnvSpec {
            links: self.env.observed_links().len(),
            intersections: self.env.intersections(),
            action_count: self.env.action_count(),
            t_c: cfg.control_interval,
            control_steps: cfg.control_steps(),
            queue_bounds: [0, cfg.scenario.flow.queue_upper_bound],
            split_bounds: [c.s_lb, c.s_ub],
            delta_s: c.delta_s,
            reward_variant: cfg.reward.variant,
        }
    }

    /// Handle one request line and produce exactly one response.
    pub fn handle(&mut self, line: &str) -> Response {
        let req = match parse_request(line) {
            Ok(r) => r,
            Err(e) => return Response::error(e.code, e.message),
        };
        match req {
            Request::Spec => Response {
                spec: Some(self.spec()),
                ..Response::new("spec")
            },
            Request::Reset(seed) => match self.env.reset_with_seed(seed) {
                Ok(obs) => Response {
                    obs: Some(obs.to_vec_u32()),
                    info: Some(Info::Reset(ResetInfo {
                        sim_time: obs.sim_time,
                        seed: self.env.config().seed,
                    })),
                    ..Response::new("reset")
                },
                Err(e) => Response::error(ErrorCode::Internal, e.to_string()),
            },
            Request::Step(action) => match self.env.step(ActionId(action)) {
                Ok(r) => Response {
                    obs: Some(r.obs.to_vec_u32()),
                    reward: Some(r.reward),
                    done: Some(r.done),
                    info: Some(Info::Step(Box::new(r.info))),
                    ..Response::new("step")
                },
                Err(e) => Response::error(code_for(&e), e.to_string()),
            },
            Request::Close => {
                self.closed = true;
                Response::closed("client")
            }
        }
    }
}

fn code_for(e: &Error) -> ErrorCode {
    match e {
        Error::InvalidAction(_) => ErrorCode::InvalidAction,
        Error::NotReset | Error::EpisodeFinished => ErrorCode::ProtocolState,
        _ => ErrorCode::Internal,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Scenario;
    use crate::net::{build_grid, GridGeometry};
    use crate::sim::DemandProfile;

    fn session(rows: usize, cols: usize) -> Session {
        let net = build_grid(rows, cols, GridGeometry::default()).unwrap();
        let d = DemandProfile::uniform(&net, 900.0, 700.0, 0, 100_000);
        let mut cfg = EpisodeConfig::new(Scenario::new(net, d));
        cfg.duration = 500;
        cfg.warmup = 300;
        Session::new(cfg).unwrap()
    }

    #[test]
    fn spec_on_reference_grid() {
        let net = build_grid(5, 5, GridGeometry::default()).unwrap();
        let mut s = Session::new(EpisodeConfig::new(Scenario::new(net, DemandProfile::empty()))).unwrap();
        let r = s.handle(r#"{"type":"spec"}"#);
        let spec = r.spec.unwrap();
        assert_eq!((spec.links, spec.intersections, spec.action_count), (80, 25, 75));
        assert_eq!(spec.t_c, 25);
        let line = s.handle(r#"{"type":"spec"}"#).to_line();
        assert!(line.contains(r#""L":80"#) && line.contains(r#""M":25"#), "{line}");
        assert!(line.contains(r#""protocol_version":"1""#));
    }

    #[test]
    fn step_before_reset_is_state_error() {
        let mut s = session(2, 2);
        let r = s.handle(r#"{"type":"step","action":1}"#);
        assert_eq!(r.error.unwrap().code, ErrorCode::ProtocolState);
    }

    #[test]
    fn errors_do_not_change_state() {
        let mut s = session(2, 2);
        s.handle(r#"{"type":"reset","seed":3}"#);
        let before = s.env().observation();
        let steps = s.env().steps();
        for bad in [
            r#"{"type":"step","action":12}"#,
            r#"{"type":"step","action":-1}"#,
            r#"{"type":"step"}"#,
            r#"{"type":"jump"}"#,
            r#"not json"#,
            r#"[1,2]"#,
            r#"{"type":"step","action":1,"protocol_version":"0"}"#,
        ] {
            let r = s.handle(bad);
            assert_eq!(r.kind, "error", "{bad}");
            assert_eq!(s.env().observation(), before);
            assert_eq!(s.env().steps(), steps);
        }
        let r = s.handle(r#"{"type":"step","action":12}"#);
        assert_eq!(r.error.unwrap().code, ErrorCode::InvalidAction);
        let r = s.handle(r#"{"type":"step","action":1,"protocol_version":"0"}"#);
        assert_eq!(r.error.unwrap().code, ErrorCode::VersionMismatch);
    }

    #[test]
    fn wire_matches_in_process() {
        let mut s = session(2, 2);
        let mut env = TscEnv::new(s.env().config().clone()).unwrap();
        let obs = env.reset_with_seed(Some(5)).unwrap();
        let r = s.handle(r#"{"type":"reset","seed":5}"#);
        assert_eq!(r.obs.unwrap(), obs.to_vec_u32());
        let mut i = 0;
        loop {
            let a = (i * 7) % 12;
            let line = s.handle(&format!(r#"{{"type":"step","action":{a}}}"#)).to_line();
            let back: Response = serde_json::from_str(&line).unwrap();
            let local = env.step(ActionId(a)).unwrap();
            assert_eq!(back.obs.unwrap(), local.obs.to_vec_u32());
            assert_eq!(back.reward.unwrap().to_bits(), local.reward.to_bits());
            assert_eq!(back.done.unwrap(), local.done);
            i += 1;
            if local.done {
                break;
            }
        }
        assert_eq!(i, 8);
        let r = s.handle(r#"{"type":"step","action":1}"#);
        assert_eq!(r.error.unwrap().code, ErrorCode::ProtocolState);
        let r = s.handle(r#"{"type":"close"}"#);
        assert_eq!(r.kind, "closed");
        assert!(s.is_closed());
    }
}
