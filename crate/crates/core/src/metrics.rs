//! Collaboration metrics over session logs: completion time, concurrent
//! time ratio, same-action concurrent ratio and mean concurrent duration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::check_log;
use crate::session::{Engine, EngineError, Outbound, Payload, SessionEvent, SessionState};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no logs given")]
    NoLogs,
    #[error("corrupt log: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeKind {
    Concurrent,
    SameAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub start_ms: u64,
    pub end_ms: u64,
    pub kind: EpisodeKind,
}

impl Episode {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms - self.start_ms
    }
}

fn concurrent(state: &SessionState) -> bool {
    let [a, b] = &state.users;
    match (&a.group, &b.group) {
        (Some(x), Some(y)) => !x.is_disjoint(y),
        _ => false,
    }
}

fn same_action(state: &SessionState) -> bool {
    let active = |i: usize| state.users[i].grab.as_ref().filter(|g| !g.releasing).map(|g| g.op);
    concurrent(state) && matches!((active(0), active(1)), (Some(a), Some(b)) if a == b)
}

struct Tracker {
    kind: EpisodeKind,
    open: Option<u64>,
    done: Vec<Episode>,
}

impl Tracker {
    fn new(kind: EpisodeKind) -> Self {
        Self { kind, open: None, done: Vec::new() }
    }

    fn observe(&mut self, on: bool, t: u64) {
        match (self.open, on) {
            (None, true) => self.open = Some(t),
            (Some(_), false) => self.close(t),
            _ => {}
        }
    }

    fn close(&mut self, t: u64) {
        if let Some(start) = self.open.take() {
            if t > start {
                self.done.push(Episode { start_ms: start, end_ms: t, kind: self.kind });
            }
        }
    }
}

fn header(log: &[SessionEvent]) -> Result<Engine, MetricsError> {
    check_log(log).map_err(|e| MetricsError::Corrupt(e.to_string()))?;
    let Payload::Out(Outbound::SessionStart { model, target, strategy, tick_hz }) = &log[0].payload else {
        unreachable!("check_log verifies the header")
    };
    Ok(Engine::new(model.clone(), target.clone(), *strategy, *tick_hz, log[0].t_ms, Vec::new())?)
}

/// Concurrent and same-action episodes, each list in time order.
pub fn detect_episodes(log: &[SessionEvent]) -> Result<Vec<Episode>, MetricsError> {
    let mut engine = header(log)?;
    let mut co = Tracker::new(EpisodeKind::Concurrent);
    let mut same = Tracker::new(EpisodeKind::SameAction);
    for ev in &log[1..] {
        match &ev.payload {
            Payload::In(msg) => {
                engine.inbound(ev.user, msg.clone(), ev.t_ms)?;
            }
            Payload::Out(Outbound::State(_)) => {
                engine.tick(ev.t_ms)?;
            }
            Payload::Out(_) => continue,
        }
        co.observe(concurrent(engine.state()), ev.t_ms);
        same.observe(same_action(engine.state()), ev.t_ms);
    }
    let end = log.last().map(|e| e.t_ms).unwrap_or(0);
    co.close(end);
    same.close(end);
    let mut out = co.done;
    out.extend(same.done);
    Ok(out)
}

/// Per-model figures, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub t_i: f64,
    pub t_co_i: f64,
    pub t_same_i: f64,
    pub n_i: usize,
    pub matched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_m: usize,
    pub models: Vec<ModelMetrics>,
    pub total_time: f64,
    pub mean_completion_time: f64,
    /// `None` when the total time is zero.
    pub concurrent_time_ratio: Option<f64>,
    /// `None` when there was no concurrent time.
    pub same_action_concurrent_ratio: Option<f64>,
    pub mean_concurrent_duration: Option<f64>,
}

/// Figures for one log. The model's time runs from the first event to the
/// first successful match, or to the last event if there was none.
pub fn model_metrics(log: &[SessionEvent]) -> Result<ModelMetrics, MetricsError> {
    let episodes = detect_episodes(log)?;
    let start = log[0].t_ms;
    let matched_at = log.iter().find_map(|e| match e.payload {
        Payload::Out(Outbound::MatchResult { matched: true, .. }) => Some(e.t_ms),
        _ => None,
    });
    let end = matched_at.unwrap_or_else(|| log.last().map(|e| e.t_ms).unwrap_or(start));
    // Episodes after completion do not count toward the task.
    let clipped = |kind: EpisodeKind| {
        episodes
            .iter()
            .filter(|e| e.kind == kind && e.start_ms < end)
            .map(|e| e.end_ms.min(end) - e.start_ms)
            .collect::<Vec<_>>()
    };
    let co = clipped(EpisodeKind::Concurrent);
    let same = clipped(EpisodeKind::SameAction);
    Ok(ModelMetrics {
        t_i: ms(end - start),
        t_co_i: ms(co.iter().sum()),
        t_same_i: ms(same.iter().sum()),
        n_i: co.len(),
        matched: matched_at.is_some(),
    })
}

fn ms(v: u64) -> f64 {
    v as f64 / 1000.0
}

/// Aggregates per-model logs into the four metrics.
pub fn compute_metrics(logs: &[Vec<SessionEvent>]) -> Result<MetricsReport, MetricsError> {
    if logs.is_empty() {
        return Err(MetricsError::NoLogs);
    }
    let models = logs.iter().map(|l| model_metrics(l)).collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(models))
}

pub fn aggregate(models: Vec<ModelMetrics>) -> MetricsReport {
    let n_m = models.len();
    let total: f64 = models.iter().map(|m| m.t_i).sum();
    let co: f64 = models.iter().map(|m| m.t_co_i).sum();
    let same: f64 = models.iter().map(|m| m.t_same_i).sum();
    let n: usize = models.iter().map(|m| m.n_i).sum();
    let defined = co > 0.0 && n > 0;
    MetricsReport {
        n_m,
        total_time: total,
        mean_completion_time: total / n_m as f64,
        concurrent_time_ratio: (total > 0.0).then(|| co / total),
        same_action_concurrent_ratio: defined.then(|| same / co),
        mean_concurrent_duration: defined.then(|| co / n as f64),
        models,
    }
}
