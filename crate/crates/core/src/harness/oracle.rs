//! Brute-force reference for tick resolution.
//!
//! Takes admission decisions (which requests were denied) from the engine's
//! log, then recomputes every tick from scratch by enumerating vertices:
//! pivots are plain means, rotations use Rodrigues' formula on an explicit
//! axis and angle, and the combine rules are written out per strategy. Only
//! `Vec3` arithmetic is shared with the engine.

use std::collections::{BTreeMap, BTreeSet};

use crate::geometry::{Positions, Vec3, VertexId, WireframeModel};
use crate::resolution::{DenyReason, OperationKind, ReactiveMethod, StrategyConfig, UserId};
use crate::session::{Inbound, Outbound, Payload, SessionEvent};

use super::{check_log, deny_of, run, HarnessError, Scenario};

const PIVOT_EPS: f64 = 1e-4;
const ZERO_EPS: f64 = 1e-7;
const ANTIPODAL_EPS: f64 = 1e-9;

type V = Vec3<f64>;

#[derive(Clone)]
struct OracleGrab {
    vertex: VertexId,
    op: OperationKind,
    pivot: V,
    offset: V,
    start: V,
    prev: V,
    latest: Option<V>,
    seq: u64,
    releasing: bool,
    cum_scale: f64,
    shared: bool,
}

#[derive(Clone, Default)]
struct OracleUser {
    pending: BTreeSet<VertexId>,
    group: BTreeSet<VertexId>,
    op: Option<OperationKind>,
    grab: Option<OracleGrab>,
}

/// Rotates `p` about unit `axis` by `angle` (Rodrigues).
fn rodrigues(p: V, axis: V, angle: f64) -> V {
    let (s, c) = angle.sin_cos();
    p * c + axis.cross(p) * s + axis * (axis.dot(p) * (1.0 - c))
}

/// Image of `p` under one user's tick input, or `None` when the input is
/// idle or degenerate this tick.
enum Motion {
    Translate(V),
    Rotate { axis: V, angle: f64 },
    Scale(f64),
}

fn motion(g: &OracleGrab) -> Option<Motion> {
    let now = g.latest?;
    let prev = g.prev;
    match g.op {
        OperationKind::Translate => Some(Motion::Translate(now - prev)),
        OperationKind::Rotate => {
            let (a, b) = (prev - g.pivot, now - g.pivot);
            if !(a.norm() > PIVOT_EPS && b.norm() > PIVOT_EPS) {
                return None;
            }
            let (a, b) = (a / a.norm(), b / b.norm());
            if (a + b).norm() <= ANTIPODAL_EPS {
                let reference = if a.x.abs() > 0.99 { V::unit_y() } else { V::unit_x() };
                let axis = a.cross(reference);
                return Some(Motion::Rotate { axis: axis / axis.norm(), angle: std::f64::consts::PI });
            }
            let cross = a.cross(b);
            let sin = cross.norm();
            if sin == 0.0 {
                return Some(Motion::Rotate { axis: V::unit_z(), angle: 0.0 });
            }
            Some(Motion::Rotate { axis: cross / sin, angle: sin.atan2(a.dot(b)) })
        }
        OperationKind::Scale => {
            let (d0, d1) = ((prev - g.pivot).norm(), (now - g.pivot).norm());
            if !(d0 > PIVOT_EPS && d1 > PIVOT_EPS) {
                return None;
            }
            Some(Motion::Scale((d1 / d0).clamp(0.01, 100.0)))
        }
    }
}

fn image(m: &Option<Motion>, pivot: V, p: V) -> V {
    match m {
        None => p,
        Some(Motion::Translate(t)) => p + *t,
        Some(Motion::Rotate { axis, angle }) => pivot + rodrigues(p - pivot, *axis, *angle),
        Some(Motion::Scale(s)) => pivot + (p - pivot) * *s,
    }
}

fn combine(strategy: StrategyConfig, a: (OperationKind, u64, V), b: (OperationKind, u64, V)) -> V {
    let (da, db) = (a.2, b.2);
    if a.0 != b.0 {
        return da + db;
    }
    match strategy {
        StrategyConfig::Reactive(ReactiveMethod::Additive) => da + db,
        StrategyConfig::Reactive(ReactiveMethod::Averaging) => (da + db) * 0.5,
        StrategyConfig::Reactive(ReactiveMethod::Intersection) => {
            let axis = |x: f64, y: f64| {
                if x.abs() < ZERO_EPS && y.abs() < ZERO_EPS {
                    0.0
                } else if x.abs() < ZERO_EPS {
                    y
                } else if y.abs() < ZERO_EPS {
                    x
                } else if (x > 0.0) != (y > 0.0) {
                    0.0
                } else if x.abs() <= y.abs() {
                    x
                } else {
                    y
                }
            };
            V::new(axis(da.x, db.x), axis(da.y, db.y), axis(da.z, db.z))
        }
        StrategyConfig::Reactive(ReactiveMethod::SecondUserPriority) => {
            if b.1 > a.1 {
                db
            } else {
                da
            }
        }
        // Preventive strategies never admit same-kind input on a shared vertex.
        _ => panic!("same-kind concurrent input on a joint vertex under {strategy}"),
    }
}

struct Oracle {
    strategy: StrategyConfig,
    positions: Positions<f64>,
    users: [OracleUser; 2],
}

impl Oracle {
    fn tick(&mut self) {
        let motions: Vec<Option<Motion>> =
            self.users.iter().map(|u| u.grab.as_ref().and_then(motion)).collect();
        let mut next = self.positions.clone();
        for (&v, &p) in &self.positions {
            let mut contributions = Vec::new();
            for (i, u) in self.users.iter().enumerate() {
                if let Some(g) = &u.grab {
                    if u.group.contains(&v) {
                        contributions.push((g.op, g.seq, image(&motions[i], g.pivot, p)));
                    }
                }
            }
            let moved = match contributions.as_slice() {
                [] => p,
                [(_, _, img)] => *img,
                [a, b] => p + combine(self.strategy, (a.0, a.1, a.2 - p), (b.0, b.1, b.2 - p)),
                _ => unreachable!("two users"),
            };
            next.insert(v, moved);
        }
        self.positions = next;

        for (i, motion) in motions.iter().enumerate() {
            let partner_group = self.users[1 - i].group.clone();
            let Some(g) = self.users[i].grab.as_mut() else { continue };
            match motion {
                Some(m) => {
                    g.prev = g.latest.take().expect("motion implies a sample");
                    if let Motion::Scale(s) = m {
                        g.cum_scale *= s;
                    }
                }
                None => g.latest = None,
            }
            g.shared |= partner_group.contains(&g.vertex);
            if g.releasing {
                let g = self.users[i].grab.take().expect("present");
                if g.op == OperationKind::Scale && !g.shared {
                    self.positions.insert(g.vertex, g.pivot + (g.start - g.pivot) * g.cum_scale);
                }
            }
        }
    }

    fn leave(&mut self, u: usize) {
        self.users[u] = OracleUser::default();
    }

    fn apply(&mut self, u: usize, msg: &Inbound, seq: u64) {
        let user = &mut self.users[u];
        match msg {
            Inbound::Join { .. } => {}
            Inbound::Select { vertex } => {
                if !user.group.contains(vertex) {
                    user.pending.insert(*vertex);
                }
            }
            Inbound::Deselect { vertex } => {
                user.pending.remove(vertex);
            }
            Inbound::ConfirmGroup {} => {
                let pending = std::mem::take(&mut user.pending);
                user.group.extend(pending);
            }
            Inbound::CancelGroup {} => *user = OracleUser { op: user.op, ..Default::default() },
            Inbound::SetOp { op } => user.op = Some(*op),
            Inbound::Grab { vertex, handle } => {
                let n = user.group.len() as f64;
                let mut sum = V::zero();
                for v in &user.group {
                    sum += self.positions[v];
                }
                let start = self.positions[vertex];
                user.grab = Some(OracleGrab {
                    vertex: *vertex,
                    op: user.op.unwrap_or(OperationKind::Translate),
                    pivot: sum / n,
                    offset: *handle - start,
                    start,
                    prev: start,
                    latest: None,
                    seq,
                    releasing: false,
                    cum_scale: 1.0,
                    shared: false,
                });
            }
            Inbound::Move { handle } => {
                if let Some(g) = user.grab.as_mut().filter(|g| !g.releasing) {
                    if handle.is_finite() {
                        g.latest = Some(*handle - g.offset);
                    }
                }
            }
            Inbound::Release {} => {
                if let Some(g) = user.grab.as_mut() {
                    g.releasing = true;
                }
            }
            Inbound::MatchCheck {} => {}
            Inbound::Leave {} | Inbound::Malformed { .. } => self.leave(u),
        }
    }
}

/// Recomputes the final positions of a recorded session.
pub fn oracle_from_log(log: &[SessionEvent]) -> Result<Positions<f64>, HarnessError> {
    check_log(log)?;
    let Payload::Out(Outbound::SessionStart { model, strategy, .. }) = &log[0].payload else {
        unreachable!("checked")
    };
    let denied = deny_of(log);
    let mut oracle = Oracle { strategy: *strategy, positions: model.vertices.clone(), users: Default::default() };
    let mut joined = [false; 2];
    for ev in &log[1..] {
        match &ev.payload {
            Payload::In(msg) => {
                let reason = denied.get(&ev.seq).copied();
                if let Inbound::Join { .. } = msg {
                    continue;
                }
                let Some(u) = ev.user.map(UserId::index) else { continue };
                match reason {
                    None => oracle.apply(u, msg, ev.seq),
                    // A malformed message is refused and its sender dropped.
                    Some(DenyReason::Malformed) => oracle.leave(u),
                    Some(_) => {}
                }
                let dropped = matches!(msg, Inbound::Leave {}) && reason.is_none();
                if dropped || reason == Some(DenyReason::Malformed) {
                    joined[u] = false;
                }
            }
            Payload::Out(Outbound::Welcome { user_id, .. }) => {
                let u = user_id.index();
                if !joined[u] {
                    oracle.users[u] = OracleUser::default();
                    joined[u] = true;
                }
            }
            Payload::Out(Outbound::State(_)) => oracle.tick(),
            Payload::Out(_) => {}
        }
    }
    Ok(oracle.positions)
}

/// Runs the scenario for its admission decisions, then recomputes the
/// final model independently.
pub fn oracle_resolve(scenario: &Scenario) -> Result<WireframeModel, HarnessError> {
    let result = run(scenario)?;
    Ok(scenario.model.with_positions(oracle_from_log(&result.log)?))
}

/// Largest Euclidean distance between corresponding vertices.
pub fn max_vertex_error(a: &Positions<f64>, b: &Positions<f64>) -> f64 {
    let ids: BTreeMap<_, _> = a.iter().collect();
    b.iter()
        .map(|(id, p)| ids.get(id).map_or(f64::INFINITY, |q| q.distance(*p)))
        .fold(0.0, f64::max)
}
