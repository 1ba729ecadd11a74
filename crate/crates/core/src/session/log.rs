//! Sequenced event log: one JSON object per line,
//! `{"seq":…,"t_ms":…,"user":…,"dir":"in"|"out","msg":{…}}`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resolution::UserId;

use super::protocol::{Inbound, Outbound};

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    In(Inbound),
    Out(Outbound),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionEvent {
    pub seq: u64,
    pub t_ms: u64,
    /// Sender for inbound events; recipient for outbound, `None` for broadcasts.
    pub user: Option<UserId>,
    pub payload: Payload,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dir {
    In,
    Out,
}

#[derive(Serialize, Deserialize)]
struct EventRecord {
    seq: u64,
    t_ms: u64,
    user: Option<UserId>,
    dir: Dir,
    msg: serde_json::Value,
}

impl Serialize for SessionEvent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let (dir, msg) = match &self.payload {
            Payload::In(m) => (Dir::In, serde_json::to_value(m)),
            Payload::Out(m) => (Dir::Out, serde_json::to_value(m)),
        };
        let msg = msg.map_err(serde::ser::Error::custom)?;
        EventRecord { seq: self.seq, t_ms: self.t_ms, user: self.user, dir, msg }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SessionEvent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = EventRecord::deserialize(d)?;
        let payload = match rec.dir {
            Dir::In => Payload::In(serde_json::from_value(rec.msg).map_err(serde::de::Error::custom)?),
            Dir::Out => Payload::Out(serde_json::from_value(rec.msg).map_err(serde::de::Error::custom)?),
        };
        Ok(SessionEvent { seq: rec.seq, t_ms: rec.t_ms, user: rec.user, payload })
    }
}

impl SessionEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Receives every event the engine emits, in sequence order.
pub trait EventSink {
    fn record(&mut self, event: &SessionEvent) -> io::Result<()>;

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl EventSink for Vec<SessionEvent> {
    fn record(&mut self, event: &SessionEvent) -> io::Result<()> {
        self.push(event.clone());
        Ok(())
    }
}

/// Streams events as JSON lines.
pub struct JsonlSink<W: Write>(pub W);

impl<W: Write> EventSink for JsonlSink<W> {
    fn record(&mut self, event: &SessionEvent) -> io::Result<()> {
        serde_json::to_writer(&mut self.0, event)?;
        self.0.write_all(b"\n")
    }

    fn flush(&mut self) -> io::Result<()> {
        self.0.flush()
    }
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<SessionEvent>, LogError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_jsonl(mut w: impl Write, events: &[SessionEvent]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
