//! Wire messages. Every websocket text frame carries one or more JSON
//! objects, one per line, each tagged by a `type` field.

use autonomy_core::engine::SimState;
use autonomy_core::geometry::ContactStatus;
use autonomy_core::Vec3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Starts a new episode. Unset fields fall back to the service config.
    Start {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        dx: Option<f64>,
        #[serde(default)]
        dz: Option<f64>,
    },
    /// Latest pointer position in world coordinates (m).
    Input {
        pos: [f64; 3],
    },
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateFrame),
    Result(ResultFrame),
    Error { message: String },
    Warning { message: String, pos: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub t: f64,
    pub tip: [f64; 3],
    pub q_h: [f64; 3],
    pub q_m: [f64; 3],
    pub q_ref: [f64; 3],
    pub alpha: f64,
    /// Force rendered to the operator (N).
    #[serde(rename = "F_H")]
    pub f_h: [f64; 3],
    pub contact: ContactStatus,
    pub success: bool,
}

impl From<&SimState> for StateFrame {
    fn from(s: &SimState) -> Self {
        Self {
            t: s.t,
            tip: arr(&s.contact_tip),
            q_h: arr(&s.q_h),
            q_m: arr(&s.q_m),
            q_ref: arr(&s.q_ref),
            alpha: s.alpha,
            f_h: arr(&s.f_total),
            contact: s.contact,
            success: s.contact == ContactStatus::Inserted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFrame {
    pub success: bool,
    pub completion_time: Option<f64>,
    /// `timeout`, `stuck_collision`, `unreachable` or `stopped`.
    pub failure_reason: Option<String>,
    pub ticks: u64,
}

pub(crate) fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Parses every non-empty line of a text frame.
pub fn parse_lines(text: &str) -> Vec<Result<ClientMessage, serde_json::Error>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_message_parses() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"input","pos":[0.1,0.2,0.3]}"#).unwrap();
        assert_eq!(m, ClientMessage::Input { pos: [0.1, 0.2, 0.3] });
    }

    #[test]
    fn start_fields_are_optional() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"start"}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::Start {
                seed: None,
                dx: None,
                dz: None
            }
        );
    }

    #[test]
    fn several_messages_per_frame() {
        let parsed = parse_lines("{\"type\":\"stop\"}\n\n{\"type\":\"bogus\"}\n");
        assert_eq!(parsed.len(), 2);
        assert!(parsed[0].is_ok());
        assert!(parsed[1].is_err());
    }

    #[test]
    fn state_frame_uses_wire_names() {
        let frame = StateFrame {
            t: 0.5,
            tip: [0.0; 3],
            q_h: [0.0; 3],
            q_m: [0.0; 3],
            q_ref: [0.0; 3],
            alpha: 1.0,
            f_h: [1.0, 2.0, 3.0],
            contact: ContactStatus::InHoleMouth,
            success: false,
        };
        let v = serde_json::to_value(ServerMessage::State(frame)).unwrap();
        assert_eq!(v["type"], "state");
        assert_eq!(v["F_H"], serde_json::json!([1.0, 2.0, 3.0]));
        assert_eq!(v["contact"], "in_hole_mouth");
    }
}
