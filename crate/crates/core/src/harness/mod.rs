//! Deterministic two-client driver on a virtual clock, log replay, the
//! brute-force oracle and protocol fuzzing.

mod fuzz;
mod oracle;
mod random;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ModelError, WireframeModel};
use crate::resolution::{DenyReason, StrategyConfig, UserId};
use crate::session::{Engine, EngineError, Inbound, Outbound, Payload, SessionEvent, Snapshot, TICK_HZ};

pub use fuzz::{check_safety, fuzz, FuzzReport};
pub use oracle::{max_vertex_error, oracle_from_log, oracle_resolve};
pub use random::{random_scenario, RandomScenarioConfig};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario: {0}")]
    Schema(String),
    #[error("scenario json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model {path}: {source}")]
    Model { path: PathBuf, source: ModelError },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error("replay diverged from the recorded log at seq {0}")]
    Divergence(u64),
}

/// One scripted client message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub t_ms: u64,
    pub user: UserId,
    pub msg: Inbound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ModelRef {
    Path(PathBuf),
    Inline(WireframeModel),
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    model: ModelRef,
    target: ModelRef,
    strategy: StrategyConfig,
    actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_ms: Option<u64>,
}

/// Both users join at t = 0, then `actions` play in `(t_ms, user)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: WireframeModel,
    pub target: WireframeModel,
    pub strategy: StrategyConfig,
    pub actions: Vec<Action>,
    /// Keep ticking until this virtual time even after the last action.
    pub end_ms: Option<u64>,
}

impl Scenario {
    pub fn new(model: WireframeModel, target: WireframeModel, strategy: StrategyConfig, actions: Vec<Action>) -> Self {
        Self { model, target, strategy, actions, end_ms: None }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.actions.iter().any(|a| a.user.0 > 1) {
            return Err(HarnessError::Schema("users must be 0 or 1".into()));
        }
        if self.actions.windows(2).any(|w| (w[0].t_ms, w[0].user) > (w[1].t_ms, w[1].user)) {
            return Err(HarnessError::Schema("actions must be sorted by t_ms, then user".into()));
        }
        if self.model.vertex_ids() != self.target.vertex_ids() {
            return Err(HarnessError::Schema("model and target vertex ids differ".into()));
        }
        Ok(())
    }

    /// Parses a scenario; model paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, HarnessError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let resolve = |r: ModelRef| -> Result<WireframeModel, HarnessError> {
            match r {
                ModelRef::Inline(m) => Ok(m),
                ModelRef::Path(p) => {
                    let path = base_dir.join(p);
                    WireframeModel::load(&path).map_err(|source| HarnessError::Model { path, source })
                }
            }
        };
        let s = Scenario {
            model: resolve(file.model)?,
            target: resolve(file.target)?,
            strategy: file.strategy,
            actions: file.actions,
            end_ms: file.end_ms,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Self-contained JSON with inline models.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile {
            model: ModelRef::Inline(self.model.clone()),
            target: ModelRef::Inline(self.target.clone()),
            strategy: self.strategy,
            actions: self.actions.clone(),
            end_ms: self.end_ms,
        })
        .expect("scenario serializes")
    }
}

/// Tick containing virtual time `t_ms`: `[k·1000/hz, (k+1)·1000/hz)`.
pub fn tick_of(t_ms: u64, hz: u32) -> u64 {
    t_ms * hz as u64 / 1000
}

/// Timestamp stamped on the snapshot closing tick `k` (its end, rounded up).
pub fn tick_end_ms(k: u64, hz: u32) -> u64 {
    ((k + 1) * 1000).div_ceil(hz as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub final_model: WireframeModel,
    pub final_snapshot: Snapshot,
    pub log: Vec<SessionEvent>,
    pub deny_count: usize,
    pub tick_count: u64,
}

impl RunResult {
    pub fn state_hash(&self) -> String {
        self.final_snapshot.state_hash()
    }
}

/// Runs a scenario against the session engine on a virtual clock.
pub fn run(scenario: &Scenario) -> Result<RunResult, HarnessError> {
    scenario.validate()?;
    let hz = TICK_HZ;
    let mut engine = Engine::new(scenario.model.clone(), scenario.target.clone(), scenario.strategy, hz, 0, Vec::new())?;
    // Transport-side view: which session user each scripted client is connected as.
    let mut conn: [Option<UserId>; 2] = [None, None];
    for (i, name) in ["user0", "user1"].into_iter().enumerate() {
        conn[i] = engine.inbound(None, Inbound::Join { name: name.into() }, 0)?.user;
    }

    let last_action_tick = scenario.actions.last().map(|a| tick_of(a.t_ms, hz)).unwrap_or(0);
    let last_tick = last_action_tick.max(scenario.end_ms.map(|t| tick_of(t, hz)).unwrap_or(0));
    let mut actions = scenario.actions.iter().peekable();
    let mut snapshot = engine.state().snapshot();
    for k in 0..=last_tick {
        while let Some(a) = actions.next_if(|a| tick_of(a.t_ms, hz) == k) {
            let idx = a.user.index();
            let delivery = engine.inbound(conn[idx], a.msg.clone(), a.t_ms)?;
            conn[idx] = match &a.msg {
                Inbound::Leave {} => None,
                Inbound::Malformed { .. } if conn[idx].is_some() => None,
                _ => delivery.user,
            };
        }
        snapshot = engine.tick(tick_end_ms(k, hz))?;
    }
    let log = engine.into_sink();
    let deny_count = log.iter().filter(|e| matches!(e.payload, Payload::Out(Outbound::Deny { .. }))).count();
    Ok(RunResult {
        final_model: scenario.model.with_positions(snapshot.positions.clone()),
        tick_count: snapshot.tick,
        final_snapshot: snapshot,
        log,
        deny_count,
    })
}

/// Seq numbers must run 0, 1, 2, … and the first record must be the session header.
pub fn check_log(log: &[SessionEvent]) -> Result<(), HarnessError> {
    for (i, ev) in log.iter().enumerate() {
        if ev.seq != i as u64 {
            return Err(HarnessError::CorruptLog(format!("expected seq {i}, found {}", ev.seq)));
        }
    }
    match log.first().map(|e| &e.payload) {
        Some(Payload::Out(Outbound::SessionStart { .. })) => Ok(()),
        _ => Err(HarnessError::CorruptLog("missing session_start header".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub final_model: WireframeModel,
    pub final_snapshot: Snapshot,
    pub events: usize,
}

/// Re-executes the inbound messages of a log with its recorded tick
/// boundaries and checks that every regenerated event matches the record.
pub fn replay(log: &[SessionEvent]) -> Result<ReplayOutcome, HarnessError> {
    check_log(log)?;
    let Payload::Out(Outbound::SessionStart { model, target, strategy, tick_hz }) = &log[0].payload else {
        unreachable!("checked above")
    };
    let mut engine = Engine::new(model.clone(), target.clone(), *strategy, *tick_hz, log[0].t_ms, Vec::new())?;
    for ev in &log[1..] {
        match &ev.payload {
            Payload::In(msg) => {
                engine.inbound(ev.user, msg.clone(), ev.t_ms)?;
            }
            Payload::Out(Outbound::State(_)) => {
                engine.tick(ev.t_ms)?;
            }
            Payload::Out(_) => {}
        }
        // Replies are regenerated ahead of their records and checked when the record is reached.
        if let Some(p) = engine.sink().get(ev.seq as usize) {
            if p != ev {
                return Err(HarnessError::Divergence(ev.seq));
            }
        }
    }
    let produced = engine.sink();
    if produced.len() != log.len() {
        let seq = produced.len().min(log.len()) as u64;
        return Err(HarnessError::Divergence(seq));
    }
    let snapshot = engine.state().snapshot();
    Ok(ReplayOutcome {
        final_model: engine.state().model.clone(),
        final_snapshot: snapshot,
        events: log.len(),
    })
}

/// Counts denials by reason.
pub fn deny_reasons(log: &[SessionEvent]) -> std::collections::BTreeMap<String, usize> {
    let mut out = std::collections::BTreeMap::new();
    for ev in log {
        if let Payload::Out(Outbound::Deny { reason, .. }) = &ev.payload {
            let name = serde_json::to_value(reason).ok().and_then(|v| v.as_str().map(String::from));
            *out.entry(name.unwrap_or_default()).or_insert(0) += 1;
        }
    }
    out
}

pub(crate) fn deny_of(log: &[SessionEvent]) -> std::collections::BTreeMap<u64, DenyReason> {
    log.iter()
        .filter_map(|ev| match &ev.payload {
            Payload::Out(Outbound::Deny { reason, seq }) => Some((*seq, *reason)),
            _ => None,
        })
        .collect()
}
