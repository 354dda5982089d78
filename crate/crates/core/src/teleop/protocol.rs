//! Wire messages. Every message is one JSON line `{"type", "seq", "payload"}`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::OperatorInput;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Button {
    Start,
    Stop,
    Reset,
    Discard,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    Hello { client: String },
    Input(OperatorInput),
    Button(Button),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HelloPayload {
    #[serde(default)]
    client: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ButtonPayload {
    button: Button,
}

fn protocol(msg: impl std::fmt::Display) -> Error {
    Error::Protocol(msg.to_string())
}

impl ClientMessage {
    /// Parses one line into `(seq, message)`.
    pub fn parse(line: &str) -> Result<(u64, Self)> {
        let v: Value = serde_json::from_str(line.trim()).map_err(protocol)?;
        let obj = v.as_object().ok_or_else(|| protocol("message is not an object"))?;
        let seq = obj
            .get("seq")
            .and_then(Value::as_u64)
            .ok_or_else(|| protocol("missing or invalid seq"))?;
        let kind = obj
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| protocol("missing type"))?;
        let payload = obj.get("payload").cloned().unwrap_or(Value::Null);
        if let Some(k) = obj.keys().find(|k| !matches!(k.as_str(), "type" | "seq" | "payload")) {
            return Err(protocol(format!("unknown field {k}")));
        }
        let bad = |e: serde_json::Error| protocol(format!("{kind} payload: {e}"));
        let msg = match kind {
            "hello" => {
                let p = if payload.is_null() {
                    HelloPayload { client: String::new() }
                } else {
                    serde_json::from_value::<HelloPayload>(payload).map_err(bad)?
                };
                Self::Hello { client: p.client }
            }
            "input" => {
                let i: OperatorInput = serde_json::from_value(payload).map_err(bad)?;
                if !i.is_finite() {
                    return Err(protocol("input payload has a non-finite value"));
                }
                Self::Input(i)
            }
            "button" => Self::Button(serde_json::from_value::<ButtonPayload>(payload).map_err(bad)?.button),
            other => return Err(protocol(format!("unknown message type {other:?}"))),
        };
        Ok((seq, msg))
    }

    pub fn to_line(&self, seq: u64) -> String {
        let (kind, payload) = match self {
            Self::Hello { client } => ("hello", json!({ "client": client })),
            Self::Input(i) => ("input", serde_json::to_value(i).expect("input serializes")),
            Self::Button(b) => ("button", json!({ "button": b })),
        };
        json!({ "type": kind, "seq": seq, "payload": payload }).to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    /// Session status plus the versioned world snapshot and latest reading.
    Snapshot(Value),
    Event { event: String, detail: Value },
    Error { kind: String, message: String, in_reply_to: Option<u64> },
}

impl ServerMessage {
    pub fn event(event: &str, detail: Value) -> Self {
        Self::Event {
            event: event.into(),
            detail,
        }
    }

    pub fn error(e: &Error, in_reply_to: Option<u64>) -> Self {
        let kind = match e {
            Error::Protocol(_) => "protocol",
            Error::CalibrationRequired => "calibration_required",
            Error::Input(_) => "input",
            _ => "internal",
        };
        Self::Error {
            kind: kind.into(),
            message: e.to_string(),
            in_reply_to,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Snapshot(_) => "snapshot",
            Self::Event { .. } => "event",
            Self::Error { .. } => "error",
        }
    }

    pub fn payload(&self) -> Value {
        match self {
            Self::Snapshot(v) => v.clone(),
            Self::Event { event, detail } => json!({ "event": event, "detail": detail }),
            Self::Error {
                kind,
                message,
                in_reply_to,
            } => json!({ "kind": kind, "message": message, "in_reply_to": in_reply_to }),
        }
    }

    pub fn to_line(&self, seq: u64) -> String {
        json!({ "type": self.kind(), "seq": seq, "payload": self.payload() }).to_string()
    }

    /// Parses a server line into `(seq, message)`.
    pub fn parse(line: &str) -> Result<(u64, Self)> {
        let v: Value = serde_json::from_str(line.trim()).map_err(protocol)?;
        let seq = v["seq"].as_u64().ok_or_else(|| protocol("missing or invalid seq"))?;
        let p = v["payload"].clone();
        let msg = match v["type"].as_str() {
            Some("snapshot") => Self::Snapshot(p),
            Some("event") => Self::Event {
                event: p["event"].as_str().unwrap_or_default().into(),
                detail: p["detail"].clone(),
            },
            Some("error") => Self::Error {
                kind: p["kind"].as_str().unwrap_or_default().into(),
                message: p["message"].as_str().unwrap_or_default().into(),
                in_reply_to: p["in_reply_to"].as_u64(),
            },
            other => return Err(protocol(format!("unknown message type {other:?}"))),
        };
        Ok((seq, msg))
    }
}
