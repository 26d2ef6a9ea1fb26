//! Line-oriented TCP protocol: every frame is one UTF-8 JSON object
//! terminated by a newline. Clients send requests carrying an `op` and a
//! correlation number; the server answers with a response echoing that
//! number, and streams (subscriptions, running queries) arrive as push
//! frames tagged with the originating request's number.
//!
//! Documented byte-for-byte in `docs/wire.md`.

pub mod client;
pub mod server;

pub use client::{Connection, QueryEvent, RunningQuery, Subscription};
pub use server::{serve, ServerHandle};

use serde_json::{Map, Value};
use std::fmt;

pub const DEFAULT_PORT: u16 = 9021;
pub const PORT_ENV: &str = "ESTEMD_PORT";
pub const BOOTSTRAP_ENV: &str = "ESTEMD_BOOTSTRAP";

/// Correlation number reserved for server reports about frames it could
/// not parse; real requests use numbers from 1 up.
pub const BAD_FRAME_CORR: u64 = 0;

/// Default listen address, honoring the port override variable.
pub fn default_bind() -> String {
    format!("0.0.0.0:{}", port_from_env())
}

/// Default client target, honoring the bootstrap override variable.
pub fn default_bootstrap() -> String {
    std::env::var(BOOTSTRAP_ENV).unwrap_or_else(|_| format!("127.0.0.1:{}", port_from_env()))
}

fn port_from_env() -> u16 {
    std::env::var(PORT_ENV).ok().and_then(|v| v.parse().ok()).unwrap_or(DEFAULT_PORT)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {msg}")]
pub struct WireError {
    pub code: String,
    pub msg: String,
}

impl WireError {
    pub fn new(code: &str, msg: impl fmt::Display) -> WireError {
        WireError { code: code.into(), msg: msg.to_string() }
    }

    pub fn bad_frame(msg: impl fmt::Display) -> WireError {
        WireError::new("bad_frame", msg)
    }

    pub fn closed(msg: impl fmt::Display) -> WireError {
        WireError::new("connection_closed", msg)
    }
}

/// One protocol frame. `Request` flows client to server; the other two
/// flow back. Payload and body members must not use the reserved names
/// `op`, `corr`, `ok`, `result`, `error`, or `event`.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Request { op: String, corr: u64, payload: Map<String, Value> },
    Response { corr: u64, result: Result<Value, WireError> },
    Push { corr: u64, event: String, body: Map<String, Value> },
}

impl Frame {
    pub fn corr(&self) -> u64 {
        match self {
            Frame::Request { corr, .. }
            | Frame::Response { corr, .. }
            | Frame::Push { corr, .. } => *corr,
        }
    }

    /// Encodes as one line. The JSON escaper guarantees no raw newline
    /// can appear, whatever the payload text contains.
    pub fn encode(&self) -> String {
        let mut obj = Map::new();
        match self {
            Frame::Request { op, corr, payload } => {
                obj.insert("op".into(), Value::String(op.clone()));
                obj.insert("corr".into(), Value::from(*corr));
                for (k, v) in payload {
                    obj.insert(k.clone(), v.clone());
                }
            }
            Frame::Response { corr, result } => {
                obj.insert("corr".into(), Value::from(*corr));
                match result {
                    Ok(value) => {
                        obj.insert("ok".into(), Value::Bool(true));
                        obj.insert("result".into(), value.clone());
                    }
                    Err(e) => {
                        obj.insert("ok".into(), Value::Bool(false));
                        let mut err = Map::new();
                        err.insert("code".into(), Value::String(e.code.clone()));
                        err.insert("msg".into(), Value::String(e.msg.clone()));
                        obj.insert("error".into(), Value::Object(err));
                    }
                }
            }
            Frame::Push { corr, event, body } => {
                obj.insert("corr".into(), Value::from(*corr));
                obj.insert("event".into(), Value::String(event.clone()));
                for (k, v) in body {
                    obj.insert(k.clone(), v.clone());
                }
            }
        }
        let mut line = Value::Object(obj).to_string();
        line.push('\n');
        line
    }

    /// Decodes one line (with or without its newline). Any failure is a
    /// `bad_frame` error; the connection that saw it stays usable.
    pub fn decode(line: &str) -> Result<Frame, WireError> {
        let value: Value =
            serde_json::from_str(line.trim_end()).map_err(WireError::bad_frame)?;
        let Value::Object(mut obj) = value else {
            return Err(WireError::bad_frame("frame must be a JSON object"));
        };
        let corr = match obj.remove("corr") {
            Some(v) => v
                .as_u64()
                .ok_or_else(|| WireError::bad_frame("corr must be a non-negative integer"))?,
            None => return Err(WireError::bad_frame("frame missing corr")),
        };
        if let Some(op) = obj.remove("op") {
            let op = op
                .as_str()
                .ok_or_else(|| WireError::bad_frame("op must be text"))?
                .to_string();
            if corr == BAD_FRAME_CORR {
                return Err(WireError::bad_frame("corr 0 is reserved"));
            }
            return Ok(Frame::Request { op, corr, payload: obj });
        }
        if let Some(event) = obj.remove("event") {
            let event = event
                .as_str()
                .ok_or_else(|| WireError::bad_frame("event must be text"))?
                .to_string();
            return Ok(Frame::Push { corr, event, body: obj });
        }
        match obj.remove("ok") {
            Some(Value::Bool(true)) => {
                let result = obj
                    .remove("result")
                    .ok_or_else(|| WireError::bad_frame("ok response missing result"))?;
                Ok(Frame::Response { corr, result: Ok(result) })
            }
            Some(Value::Bool(false)) => {
                let err = obj
                    .remove("error")
                    .ok_or_else(|| WireError::bad_frame("error response missing error"))?;
                let code = err
                    .get("code")
                    .and_then(Value::as_str)
                    .ok_or_else(|| WireError::bad_frame("error missing code"))?;
                let msg = err.get("msg").and_then(Value::as_str).unwrap_or("");
                Ok(Frame::Response { corr, result: Err(WireError::new(code, msg)) })
            }
            Some(_) => Err(WireError::bad_frame("ok must be a boolean")),
            None => Err(WireError::bad_frame("frame has none of op, event, ok")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn req(op: &str, corr: u64, payload: Value) -> Frame {
        let Value::Object(payload) = payload else { panic!("payload must be an object") };
        Frame::Request { op: op.into(), corr, payload }
    }

    #[test]
    fn canonical_examples_encode_exactly() {
        let f = req("list_topics", 1, serde_json::json!({}));
        assert_eq!(f.encode(), "{\"op\":\"list_topics\",\"corr\":1}\n");
        let f = Frame::Response {
            corr: 1,
            result: Ok(serde_json::json!({"topics": []})),
        };
        assert_eq!(f.encode(), "{\"corr\":1,\"ok\":true,\"result\":{\"topics\":[]}}\n");
        let f = Frame::Response {
            corr: 0,
            result: Err(WireError::bad_frame("expected value at line 1 column 7")),
        };
        assert_eq!(
            f.encode(),
            "{\"corr\":0,\"ok\":false,\"error\":{\"code\":\"bad_frame\",\"msg\":\"expected value at line 1 column 7\"}}\n"
        );
    }

    #[test]
    fn newlines_in_text_stay_escaped() {
        let f = req("produce", 3, serde_json::json!({"note": "line one\nline two"}));
        let line = f.encode();
        assert_eq!(line.matches('\n').count(), 1, "only the terminator");
        assert!(line.ends_with('\n'));
        assert_eq!(Frame::decode(&line).unwrap(), f);
    }

    #[test]
    fn malformed_lines_are_bad_frames() {
        for bad in ["{\"op\":", "[]", "42", "{\"corr\": 1}", "{\"op\": 9, \"corr\": 1}", ""] {
            let err = Frame::decode(bad).unwrap_err();
            assert_eq!(err.code, "bad_frame", "{bad:?}");
        }
    }

    #[test]
    fn corr_zero_is_reserved_for_the_server() {
        let err = Frame::decode("{\"op\":\"list_topics\",\"corr\":0}").unwrap_err();
        assert_eq!(err.code, "bad_frame");
        assert!(err.msg.contains("reserved"), "{err}");
    }

    fn arb_json_scalar() -> impl Strategy<Value = Value> {
        prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            any::<i64>().prop_map(Value::from),
            // finite floats only: JSON cannot carry NaN or infinities raw
            any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(Value::from),
            "[a-zA-Z0-9 _\\n\"\\\\]{0,12}".prop_map(Value::String),
        ]
    }

    fn arb_payload() -> impl Strategy<Value = Map<String, Value>> {
        proptest::collection::btree_map("[a-z_]{1,8}", arb_json_scalar(), 0..5).prop_map(|m| {
            m.into_iter()
                .filter(|(k, _)| !matches!(k.as_str(), "op" | "corr" | "ok" | "result" | "error" | "event"))
                .collect()
        })
    }

    fn arb_frame() -> impl Strategy<Value = Frame> {
        prop_oneof![
            ("[a-z_]{1,12}", 1u64..u64::MAX, arb_payload())
                .prop_map(|(op, corr, payload)| Frame::Request { op, corr, payload }),
            (any::<u64>(), arb_json_scalar())
                .prop_map(|(corr, v)| Frame::Response { corr, result: Ok(v) }),
            (any::<u64>(), "[a-z_]{1,8}", "[ -~]{0,20}")
                .prop_map(|(corr, code, msg)| Frame::Response {
                    corr,
                    result: Err(WireError::new(&code, msg)),
                }),
            (any::<u64>(), "[a-z_]{1,8}", arb_payload())
                .prop_map(|(corr, event, body)| Frame::Push { corr, event, body }),
        ]
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(frame in arb_frame()) {
            let line = frame.encode();
            prop_assert!(line.ends_with('\n'));
            prop_assert_eq!(line.matches('\n').count(), 1);
            let back = Frame::decode(&line).unwrap();
            prop_assert_eq!(back, frame);
        }

        #[test]
        fn decode_never_panics(line in "[ -~\\n\\t{}\"\\[\\]]{0,80}") {
            let _ = Frame::decode(&line);
        }
    }
}
