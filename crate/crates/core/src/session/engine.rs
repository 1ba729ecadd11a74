//! Single ordered event queue around [`SessionState`]: assigns sequence
//! numbers, stamps server time and records every message.

use std::io;

use thiserror::Error;

use crate::geometry::WireframeModel;
use crate::resolution::{StrategyConfig, UserId};

use super::log::{EventSink, Payload, SessionEvent};
use super::protocol::{Envelope, Inbound, Outbound, Recipient, Snapshot};
use super::state::{SessionError, SessionState};

/// Live tick cadence.
pub const TICK_HZ: u32 = 90;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("event log: {0}")]
    Io(#[from] io::Error),
}

/// Result of one inbound message.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub seq: u64,
    /// Sender's user id after the message (assigned on join).
    pub user: Option<UserId>,
    pub replies: Vec<Envelope>,
}

pub struct Engine<S: EventSink = Vec<SessionEvent>> {
    state: SessionState,
    sink: S,
    next_seq: u64,
    last_t_ms: u64,
    tick_hz: u32,
}

impl<S: EventSink> Engine<S> {
    /// Starts a session and records the `session_start` header as event 0.
    pub fn new(
        model: WireframeModel,
        target: WireframeModel,
        strategy: StrategyConfig,
        tick_hz: u32,
        t_ms: u64,
        sink: S,
    ) -> Result<Self, EngineError> {
        let mut engine =
            Self { state: SessionState::new(model, target, strategy), sink, next_seq: 0, last_t_ms: t_ms, tick_hz };
        let header = Outbound::SessionStart {
            model: engine.state.model.clone(),
            target: engine.state.target.clone(),
            strategy,
            tick_hz,
        };
        engine.record(None, Payload::Out(header), t_ms)?;
        Ok(engine)
    }

    fn record(&mut self, user: Option<UserId>, payload: Payload, t_ms: u64) -> io::Result<u64> {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.last_t_ms = self.last_t_ms.max(t_ms);
        self.sink.record(&SessionEvent { seq, t_ms: self.last_t_ms, user, payload })?;
        Ok(seq)
    }

    pub fn inbound(&mut self, from: Option<UserId>, msg: Inbound, t_ms: u64) -> Result<Delivery, EngineError> {
        let seq = self.record(from, Payload::In(msg.clone()), t_ms)?;
        let (user, replies) = self.state.handle_message(from, &msg, seq);
        for env in &replies {
            let to = match env.to {
                Recipient::User(u) => Some(u),
                Recipient::All => None,
                Recipient::Sender => from,
            };
            self.record(to, Payload::Out(env.msg.clone()), t_ms)?;
        }
        Ok(Delivery { seq, user, replies })
    }

    /// Resolves one tick and records the broadcast snapshot.
    pub fn tick(&mut self, t_ms: u64) -> Result<Snapshot, EngineError> {
        let snap = self.state.advance_tick()?;
        self.record(None, Payload::Out(Outbound::State(snap.clone())), t_ms)?;
        Ok(snap)
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn sink_mut(&mut self) -> &mut S {
        &mut self.sink
    }

    pub fn into_sink(self) -> S {
        self.sink
    }

    pub fn tick_hz(&self) -> u32 {
        self.tick_hz
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.sink.flush()
    }
}
