//! Authoritative session state machine for exactly two users.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{
    centroid_iter, rotation_delta, scale_delta, snap_back, translation_delta, GeometryError, Positions,
    TransformDelta, Vec3, VertexId, WireframeModel, PIVOT_EPSILON,
};
use crate::resolution::{
    check_alr_grab, check_olr_select, partition, resolve_tick, Access, ActiveOps, DenyReason, GrabInput, LockTable,
    OperationKind, OverlapPartition, ResolutionError, StrategyConfig, UserId,
};

use super::protocol::{Envelope, Inbound, Outbound, Snapshot};

/// Default per-vertex match tolerance, meters.
pub const MATCH_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Resolution(#[from] ResolutionError),
}

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("model and target vertex ids differ")]
    IdMismatch,
}

/// An in-progress grab.
#[derive(Debug, Clone, PartialEq)]
pub struct GrabState {
    pub owner: UserId,
    pub vertex: VertexId,
    pub op: OperationKind,
    /// Group centroid captured at grab start.
    pub pivot: Vec3<f64>,
    /// Handle position minus grabbed vertex position at grab start.
    pub offset: Vec3<f64>,
    /// Grabbed vertex position at grab start.
    pub start_position: Vec3<f64>,
    /// Grab point consumed by the previous tick.
    pub prev_point: Vec3<f64>,
    /// Latest grab point received since the previous tick.
    pub latest_point: Option<Vec3<f64>>,
    pub start_seq: u64,
    /// Release received; the grab ends at the next tick after its last sample is applied.
    pub releasing: bool,
    /// Product of the applied per-tick scale factors.
    pub cumulative_scale: f64,
    /// The grabbed vertex was in the partner's group at some tick during the grab.
    pub shared: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserSlot {
    pub joined: bool,
    pub name: String,
    pub pending: BTreeSet<VertexId>,
    /// Confirmed group; `None` or non-empty.
    pub group: Option<BTreeSet<VertexId>>,
    pub op: Option<OperationKind>,
    pub grab: Option<GrabState>,
}

impl UserSlot {
    pub fn current_op(&self) -> OperationKind {
        self.op.unwrap_or(OperationKind::Translate)
    }

    /// Pending and confirmed vertices.
    pub fn selection(&self) -> BTreeSet<VertexId> {
        let mut s = self.pending.clone();
        if let Some(g) = &self.group {
            s.extend(g.iter().copied());
        }
        s
    }

    fn group_or_empty(&self) -> BTreeSet<VertexId> {
        self.group.clone().unwrap_or_default()
    }

    fn reset(&mut self) {
        *self = UserSlot::default();
    }
}

/// Egocentric vertex coloring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorState {
    Available,
    Mine,
    Partner,
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub matched: bool,
    pub distances: BTreeMap<VertexId, f64>,
    pub max_error: f64,
}

/// Every vertex within `threshold` meters (inclusive) of its target.
pub fn match_check(
    model: &Positions<f64>,
    target: &Positions<f64>,
    threshold: f64,
) -> Result<MatchReport, MatchError> {
    if model.len() != target.len() || model.keys().zip(target.keys()).any(|(a, b)| a != b) {
        return Err(MatchError::IdMismatch);
    }
    let distances: BTreeMap<_, _> = model.iter().map(|(id, p)| (*id, p.distance(target[id]))).collect();
    let max_error = distances.values().copied().fold(0.0, f64::max);
    Ok(MatchReport { matched: distances.values().all(|&d| d <= threshold), distances, max_error })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub model: WireframeModel,
    pub target: WireframeModel,
    pub strategy: StrategyConfig,
    pub users: [UserSlot; 2],
    pub locks: LockTable,
    pub tick: u64,
    pub match_threshold: f64,
}

impl SessionState {
    pub fn new(model: WireframeModel, target: WireframeModel, strategy: StrategyConfig) -> Self {
        Self {
            model,
            target,
            strategy,
            users: Default::default(),
            locks: LockTable::new(),
            tick: 0,
            match_threshold: MATCH_THRESHOLD,
        }
    }

    pub fn user(&self, u: UserId) -> &UserSlot {
        &self.users[u.index()]
    }

    fn user_mut(&mut self, u: UserId) -> &mut UserSlot {
        &mut self.users[u.index()]
    }

    /// Partition of the two confirmed groups.
    pub fn group_partition(&self) -> OverlapPartition {
        partition(&self.users[0].group_or_empty(), &self.users[1].group_or_empty())
    }

    pub fn active_ops(&self) -> ActiveOps {
        [0, 1].map(|i| self.users[i].grab.as_ref().map(|g| (g.op, g.start_seq)))
    }

    fn refresh_locks(&mut self) {
        self.locks.clear();
        if self.strategy != StrategyConfig::ObjectLevelRestriction {
            return;
        }
        for u in [UserId::FIRST, UserId::SECOND] {
            for v in self.user(u).selection() {
                self.locks.insert(v, u);
            }
        }
    }

    /// Lowest free slot, if any.
    fn free_slot(&self) -> Option<UserId> {
        [UserId::FIRST, UserId::SECOND].into_iter().find(|u| !self.user(*u).joined)
    }

    fn welcome(&self, user: UserId) -> Outbound {
        Outbound::Welcome {
            user_id: user,
            model: self.model.clone(),
            target: self.target.clone(),
            strategy: self.strategy,
        }
    }

    /// Applies one inbound message. `from` is the sender's user id (`None`
    /// for a connection that has not joined) and `seq` the message's server
    /// sequence number. Returns the assigned id for joins and the replies.
    pub fn handle_message(
        &mut self,
        from: Option<UserId>,
        msg: &Inbound,
        seq: u64,
    ) -> (Option<UserId>, Vec<Envelope>) {
        let deny = |user: Option<UserId>, reason: DenyReason| -> Vec<Envelope> {
            let out = Outbound::Deny { reason, seq };
            match user {
                Some(u) => vec![Envelope::to_user(u, out)],
                None => vec![Envelope::to_sender(out)],
            }
        };

        if let Inbound::Join { name } = msg {
            if let Some(u) = from.filter(|u| self.user(*u).joined) {
                return (Some(u), vec![Envelope::to_user(u, self.welcome(u))]);
            }
            let Some(u) = self.free_slot() else {
                return (None, deny(None, DenyReason::SessionFull));
            };
            let slot = self.user_mut(u);
            slot.reset();
            slot.joined = true;
            slot.name = name.clone();
            return (Some(u), vec![Envelope::to_user(u, self.welcome(u))]);
        }

        let Some(user) = from.filter(|u| self.user(*u).joined) else {
            return (from, deny(None, DenyReason::NotJoined));
        };

        let replies = match msg {
            Inbound::Join { .. } => unreachable!("handled above"),
            Inbound::Select { vertex } => self.select(user, *vertex, seq),
            Inbound::Deselect { vertex } => {
                if !self.model.contains(*vertex) {
                    deny(Some(user), DenyReason::BadVertex)
                } else {
                    self.user_mut(user).pending.remove(vertex);
                    self.refresh_locks();
                    vec![]
                }
            }
            Inbound::ConfirmGroup {} => {
                let slot = self.user(user);
                if slot.pending.is_empty() {
                    deny(Some(user), DenyReason::NoGroup)
                } else if slot.grab.is_some() {
                    deny(Some(user), DenyReason::GrabActive)
                } else {
                    let slot = self.user_mut(user);
                    let pending = std::mem::take(&mut slot.pending);
                    slot.group.get_or_insert_with(BTreeSet::new).extend(pending);
                    vec![]
                }
            }
            Inbound::CancelGroup {} => {
                let slot = self.user_mut(user);
                if slot.group.is_none() && slot.pending.is_empty() {
                    deny(Some(user), DenyReason::NoGroup)
                } else {
                    slot.grab = None;
                    slot.group = None;
                    slot.pending.clear();
                    self.refresh_locks();
                    vec![]
                }
            }
            Inbound::SetOp { op } => {
                self.user_mut(user).op = Some(*op);
                vec![]
            }
            Inbound::Grab { vertex, handle } => self.grab(user, *vertex, *handle, seq),
            Inbound::Move { handle } => {
                if let Some(g) = self.user_mut(user).grab.as_mut().filter(|g| !g.releasing) {
                    if handle.is_finite() {
                        g.latest_point = Some(*handle - g.offset);
                    }
                }
                vec![]
            }
            Inbound::Release {} => {
                if let Some(g) = self.user_mut(user).grab.as_mut() {
                    g.releasing = true;
                }
                vec![]
            }
            Inbound::MatchCheck {} => {
                let report = match_check(&self.model.vertices, &self.target.vertices, self.match_threshold);
                match report {
                    Ok(r) => vec![Envelope::broadcast(Outbound::MatchResult {
                        matched: r.matched,
                        max_error_m: r.max_error,
                    })],
                    Err(_) => deny(Some(user), DenyReason::BadVertex),
                }
            }
            Inbound::Leave {} => self.leave(user),
            Inbound::Malformed { .. } => {
                let mut out = deny(Some(user), DenyReason::Malformed);
                out.extend(self.leave(user));
                out
            }
        };
        (Some(user), replies)
    }

    fn select(&mut self, user: UserId, vertex: VertexId, seq: u64) -> Vec<Envelope> {
        let deny = |reason| vec![Envelope::to_user(user, Outbound::Deny { reason, seq })];
        if !self.model.contains(vertex) {
            return deny(DenyReason::BadVertex);
        }
        if self.strategy == StrategyConfig::ObjectLevelRestriction {
            match check_olr_select(user, vertex, &self.locks, &self.model.vertices) {
                Ok(Access::Allow) => {}
                Ok(Access::Deny(reason)) => return deny(reason),
                Err(_) => return deny(DenyReason::BadVertex),
            }
        }
        let slot = self.user_mut(user);
        if !slot.group.as_ref().is_some_and(|g| g.contains(&vertex)) {
            slot.pending.insert(vertex);
        }
        self.refresh_locks();
        vec![]
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn grab(&mut self, user: UserId, vertex: VertexId, handle: Vec3<f64>, seq: u64) -> Vec<Envelope> {
        let deny = |reason| vec![Envelope::to_user(user, Outbound::Deny { reason, seq })];
        if !self.model.contains(vertex) || !handle.is_finite() {
            return deny(DenyReason::BadVertex);
        }
        let slot = self.user(user);
        let Some(group) = slot.group.as_ref().filter(|g| g.contains(&vertex)) else {
            return deny(DenyReason::NoGroup);
        };
        if slot.grab.is_some() {
            return deny(DenyReason::GrabActive);
        }
        let op = slot.current_op();
        let pivot = centroid_iter(group.iter().map(|v| self.model.vertices[v]))
            .expect("confirmed groups are non-empty");
        let start = self.model.vertices[&vertex];
        if op.needs_pivot_distance() && !(start.distance(pivot) > PIVOT_EPSILON) {
            return deny(DenyReason::DegeneratePivot);
        }
        if self.strategy == StrategyConfig::ActionLevelRestriction {
            if let Access::Deny(reason) = check_alr_grab(user, op, &self.group_partition(), &self.active_ops()) {
                return deny(reason);
            }
        }
        self.user_mut(user).grab = Some(GrabState {
            owner: user,
            vertex,
            op,
            pivot,
            offset: handle - start,
            start_position: start,
            prev_point: start,
            latest_point: None,
            start_seq: seq,
            releasing: false,
            cumulative_scale: 1.0,
            shared: false,
        });
        vec![]
    }

    fn leave(&mut self, user: UserId) -> Vec<Envelope> {
        self.user_mut(user).reset();
        self.refresh_locks();
        let other = user.other();
        if self.user(other).joined {
            vec![Envelope::to_user(other, Outbound::PeerLeft {})]
        } else {
            vec![]
        }
    }

    /// Per-tick delta for one grab and whether its latest sample was consumed.
    fn grab_delta(grab: &GrabState) -> (TransformDelta<f64>, bool) {
        let Some(now) = grab.latest_point else {
            return (TransformDelta::identity(), false);
        };
        let prev = grab.prev_point;
        let delta = match grab.op {
            OperationKind::Translate => Ok(TransformDelta::translation(translation_delta(prev, now))),
            OperationKind::Rotate => rotation_delta(prev, now, grab.pivot).map(TransformDelta::rotation),
            OperationKind::Scale => {
                // A sample on the pivot would leave no direction to measure the next tick from.
                if now.distance(grab.pivot) > PIVOT_EPSILON {
                    scale_delta(prev, now, grab.pivot).and_then(TransformDelta::scaling)
                } else {
                    Err(GeometryError::DegeneratePivot { distance: now.distance(grab.pivot) })
                }
            }
        };
        match delta {
            Ok(d) => (d, true),
            Err(_) => (TransformDelta::identity(), false),
        }
    }

    /// Resolves all active grabs for one tick and returns the broadcast snapshot.
    pub fn advance_tick(&mut self) -> Result<Snapshot, SessionError> {
        let part = self.group_partition();
        let mut inputs: [Option<GrabInput<f64>>; 2] = [None, None];
        let mut consumed = [false; 2];
        for i in 0..2 {
            if let Some(g) = &self.users[i].grab {
                let (delta, used) = Self::grab_delta(g);
                consumed[i] = used;
                inputs[i] = Some(GrabInput { op: g.op, seq: g.start_seq, pivot: g.pivot, delta });
            }
        }
        if inputs.iter().any(Option::is_some) {
            self.model.vertices = resolve_tick(&self.model.vertices, &inputs, &part, self.strategy)?;
        }

        for i in 0..2 {
            let partner_group = self.users[1 - i].group_or_empty();
            let Some(g) = self.users[i].grab.as_mut() else { continue };
            if consumed[i] {
                g.prev_point = g.latest_point.take().expect("consumed sample");
                if let Some(input) = &inputs[i] {
                    g.cumulative_scale *= input.delta.scale;
                }
            } else {
                g.latest_point = None;
            }
            g.shared |= partner_group.contains(&g.vertex);
            if g.releasing {
                let g = self.users[i].grab.take().expect("grab present");
                if g.op == OperationKind::Scale && !g.shared {
                    let single: Positions<f64> = [(g.vertex, self.model.vertices[&g.vertex])].into_iter().collect();
                    let snapped = snap_back(&single, g.vertex, g.start_position, g.pivot, g.cumulative_scale);
                    self.model.vertices.insert(g.vertex, snapped[&g.vertex]);
                }
            }
        }
        self.tick += 1;
        Ok(self.snapshot())
    }

    pub fn snapshot(&self) -> Snapshot {
        let users = [UserId::FIRST, UserId::SECOND];
        Snapshot {
            tick: self.tick,
            positions: self.model.vertices.clone(),
            selections: users.iter().map(|u| (*u, self.user(*u).selection().into_iter().collect())).collect(),
            active_ops: users.iter().map(|u| (*u, self.user(*u).grab.as_ref().map(|g| g.op))).collect(),
        }
    }

    /// Coloring of every vertex as seen by `viewer`.
    pub fn color_state(&self, viewer: UserId) -> BTreeMap<VertexId, ColorState> {
        let mine = self.user(viewer).selection();
        let theirs = self.user(viewer.other()).selection();
        self.model
            .vertices
            .keys()
            .map(|v| {
                let c = match (mine.contains(v), theirs.contains(v)) {
                    (false, false) => ColorState::Available,
                    (true, false) => ColorState::Mine,
                    (false, true) => ColorState::Partner,
                    (true, true) => ColorState::Shared,
                };
                (*v, c)
            })
            .collect()
    }
}
