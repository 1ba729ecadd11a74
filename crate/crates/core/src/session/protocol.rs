//! Wire messages. Each message is one JSON object tagged by `"type"`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{Positions, Vec3, VertexId, WireframeModel};
use crate::resolution::{DenyReason, OperationKind, StrategyConfig, UserId};

/// Client → server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Inbound {
    Join { name: String },
    Select { vertex: VertexId },
    Deselect { vertex: VertexId },
    ConfirmGroup {},
    CancelGroup {},
    SetOp { op: OperationKind },
    Grab { vertex: VertexId, handle: Vec3<f64> },
    Move { handle: Vec3<f64> },
    Release {},
    MatchCheck {},
    /// Connection closed. Emitted by the transport, never required from clients.
    Leave {},
    /// Unparseable input, kept verbatim so the log stays complete.
    Malformed { raw: String },
}

impl Inbound {
    /// Parses one line; anything that is not a valid message becomes `Malformed`.
    pub fn parse(line: &str) -> Inbound {
        serde_json::from_str(line).unwrap_or_else(|_| Inbound::Malformed { raw: line.to_string() })
    }
}

/// Authoritative state broadcast once per tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub positions: Positions<f64>,
    pub selections: BTreeMap<UserId, Vec<VertexId>>,
    pub active_ops: BTreeMap<UserId, Option<OperationKind>>,
}

impl Snapshot {
    /// SHA-256 over the exact bit patterns of the snapshot contents.
    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.tick.to_le_bytes());
        for (id, p) in &self.positions {
            h.update(id.0.to_le_bytes());
            for c in p.to_array() {
                h.update(c.to_bits().to_le_bytes());
            }
        }
        for (user, sel) in &self.selections {
            h.update([user.0, 0xfe]);
            for v in sel {
                h.update(v.0.to_le_bytes());
            }
        }
        for (user, op) in &self.active_ops {
            h.update([user.0, op.map_or(0xff, |o| o as u8)]);
        }
        hex::encode(h.finalize())
    }
}

/// Server → client (and the log header).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outbound {
    /// First log record; carries everything replay needs to rebuild the session.
    SessionStart { model: WireframeModel, target: WireframeModel, strategy: StrategyConfig, tick_hz: u32 },
    Welcome { user_id: UserId, model: WireframeModel, target: WireframeModel, strategy: StrategyConfig },
    State(Snapshot),
    Deny { reason: DenyReason, seq: u64 },
    MatchResult { matched: bool, max_error_m: f64 },
    PeerLeft {},
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipient {
    User(UserId),
    All,
    /// The connection the triggering message came from, joined or not.
    Sender,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub to: Recipient,
    pub msg: Outbound,
}

impl Envelope {
    pub fn to_user(user: UserId, msg: Outbound) -> Self {
        Self { to: Recipient::User(user), msg }
    }

    pub fn to_sender(msg: Outbound) -> Self {
        Self { to: Recipient::Sender, msg }
    }

    pub fn broadcast(msg: Outbound) -> Self {
        Self { to: Recipient::All, msg }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inbound_wire_format() {
        let m = Inbound::parse(r#"{"type":"grab","vertex":3,"handle":[0.5,1,0]}"#);
        assert_eq!(m, Inbound::Grab { vertex: VertexId(3), handle: Vec3::new(0.5, 1.0, 0.0) });
        assert_eq!(Inbound::parse(r#"{"type":"confirm_group"}"#), Inbound::ConfirmGroup {});
        assert_eq!(Inbound::parse(r#"{"type":"set_op","op":"rotate"}"#), Inbound::SetOp { op: OperationKind::Rotate });
        assert!(matches!(Inbound::parse(r#"{"type":"select"}"#), Inbound::Malformed { .. }));
        assert!(matches!(Inbound::parse("not json"), Inbound::Malformed { .. }));
        assert!(matches!(Inbound::parse(r#"{"type":"set_op","op":"shear"}"#), Inbound::Malformed { .. }));
        assert_eq!(serde_json::to_string(&Inbound::Release {}).unwrap(), r#"{"type":"release"}"#);
    }

    #[test]
    fn outbound_wire_format() {
        let mut positions = Positions::new();
        positions.insert(VertexId(0), Vec3::new(0.0, 0.5, 1.0));
        let snap = Snapshot {
            tick: 4,
            positions,
            selections: [(UserId(0), vec![VertexId(0)]), (UserId(1), vec![])].into_iter().collect(),
            active_ops: [(UserId(0), Some(OperationKind::Scale)), (UserId(1), None)].into_iter().collect(),
        };
        let json = serde_json::to_string(&Outbound::State(snap.clone())).unwrap();
        assert_eq!(
            json,
            r#"{"type":"state","tick":4,"positions":{"0":[0.0,0.5,1.0]},"selections":{"0":[0],"1":[]},"active_ops":{"0":"scale","1":null}}"#
        );
        let back: Outbound = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Outbound::State(snap));

        let deny = Outbound::Deny { reason: DenyReason::OlrLocked, seq: 9 };
        assert_eq!(serde_json::to_string(&deny).unwrap(), r#"{"type":"deny","reason":"olr_locked","seq":9}"#);
        assert_eq!(serde_json::to_string(&Outbound::PeerLeft {}).unwrap(), r#"{"type":"peer_left"}"#);
    }
}
