//! Server-authoritative session: selection and group lifecycle, grab
//! streams, tick resolution, ownership coloring, match validation and the
//! event log.

mod engine;
pub mod log;
mod protocol;
mod state;

pub use engine::{Delivery, Engine, EngineError, TICK_HZ};
pub use log::{read_jsonl, write_jsonl, EventSink, JsonlSink, LogError, Payload, SessionEvent};
pub use protocol::{Envelope, Inbound, Outbound, Recipient, Snapshot};
pub use state::{
    match_check, ColorState, GrabState, MatchError, MatchReport, SessionError, SessionState, UserSlot,
    MATCH_THRESHOLD,
};

#[cfg(test)]
mod tests;
