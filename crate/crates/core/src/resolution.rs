//! Overlap partitioning, preventive admission checks and reactive
//! composition of concurrent per-tick inputs.
//!
//! Reactive strategies combine per-vertex displacements: each user's delta
//! is first applied about that user's own pivot, and only the resulting
//! displacement vectors meet on joint vertices.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Positions, TransformDelta, Vec3, VertexId};
use crate::scalar::Scalar;

/// Components below this magnitude (meters) count as "no input on this axis"
/// for the intersection rule.
pub const INTERSECTION_EPSILON: f64 = 1e-7;

/// Session participant, 0 or 1 by join order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct UserId(pub u8);

impl<'de> Deserialize<'de> for UserId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        crate::id_key::deserialize_index(d, 1).map(|v| UserId(v as u8))
    }
}

impl UserId {
    pub const FIRST: UserId = UserId(0);
    pub const SECOND: UserId = UserId(1);

    pub fn other(self) -> UserId {
        UserId(1 - self.0)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "user {}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationKind {
    Translate,
    Rotate,
    Scale,
}

impl OperationKind {
    pub const ALL: [OperationKind; 3] = [OperationKind::Translate, OperationKind::Rotate, OperationKind::Scale];

    pub fn needs_pivot_distance(self) -> bool {
        !matches!(self, OperationKind::Translate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReactiveMethod {
    Additive,
    Averaging,
    Intersection,
    SecondUserPriority,
}

/// The single conflict-handling behavior governing a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyConfig {
    /// Exclusive per-vertex locks taken at selection time.
    ObjectLevelRestriction,
    /// Overlapping selections allowed; a second concurrent grab of the same
    /// operation kind on intersecting groups is refused.
    ActionLevelRestriction,
    Reactive(ReactiveMethod),
}

impl StrategyConfig {
    pub const ALL: [StrategyConfig; 6] = [
        StrategyConfig::ObjectLevelRestriction,
        StrategyConfig::ActionLevelRestriction,
        StrategyConfig::Reactive(ReactiveMethod::Additive),
        StrategyConfig::Reactive(ReactiveMethod::Averaging),
        StrategyConfig::Reactive(ReactiveMethod::Intersection),
        StrategyConfig::Reactive(ReactiveMethod::SecondUserPriority),
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyConfig::ObjectLevelRestriction => "olr",
            StrategyConfig::ActionLevelRestriction => "alr",
            StrategyConfig::Reactive(ReactiveMethod::Additive) => "additive",
            StrategyConfig::Reactive(ReactiveMethod::Averaging) => "averaging",
            StrategyConfig::Reactive(ReactiveMethod::Intersection) => "intersection",
            StrategyConfig::Reactive(ReactiveMethod::SecondUserPriority) => "second_user",
        }
    }
}

impl fmt::Display for StrategyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy {0:?} (expected olr, alr, additive, averaging, intersection or second_user)")]
pub struct UnknownStrategy(pub String);

impl FromStr for StrategyConfig {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyConfig::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

impl Serialize for StrategyConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for StrategyConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Machine-readable reason attached to every refused request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    OlrLocked,
    AlrSameOp,
    DegeneratePivot,
    NoGroup,
    BadVertex,
    GrabActive,
    NotJoined,
    SessionFull,
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Allow,
    Deny(DenyReason),
}

impl Access {
    pub fn is_allowed(self) -> bool {
        matches!(self, Access::Allow)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolutionError {
    #[error("vertex {0} does not exist")]
    UnknownVertex(VertexId),
    #[error("invariant violated: {0}")]
    Invariant(&'static str),
}

/// Vertex → owning user, populated only under object-level restriction.
pub type LockTable = BTreeMap<VertexId, UserId>;

/// Per-vertex displacement one user's input induces on their own group.
pub type DisplacementField<T> = BTreeMap<VertexId, Vec3<T>>;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OverlapPartition {
    pub joint: BTreeSet<VertexId>,
    /// Only in the first user's selection.
    pub disjoint_a: BTreeSet<VertexId>,
    /// Only in the second user's selection.
    pub disjoint_b: BTreeSet<VertexId>,
}

impl OverlapPartition {
    pub fn group(&self, user: UserId) -> impl Iterator<Item = VertexId> + '_ {
        let own = if user == UserId::FIRST { &self.disjoint_a } else { &self.disjoint_b };
        self.joint.iter().chain(own.iter()).copied()
    }

    pub fn contains(&self, user: UserId, v: VertexId) -> bool {
        let own = if user == UserId::FIRST { &self.disjoint_a } else { &self.disjoint_b };
        self.joint.contains(&v) || own.contains(&v)
    }
}

pub fn partition(selection_a: &BTreeSet<VertexId>, selection_b: &BTreeSet<VertexId>) -> OverlapPartition {
    OverlapPartition {
        joint: selection_a.intersection(selection_b).copied().collect(),
        disjoint_a: selection_a.difference(selection_b).copied().collect(),
        disjoint_b: selection_b.difference(selection_a).copied().collect(),
    }
}

/// Object-level restriction: a vertex locked by the other user cannot be selected.
pub fn check_olr_select<V>(
    user: UserId,
    vertex: VertexId,
    locks: &LockTable,
    vertices: &BTreeMap<VertexId, V>,
) -> Result<Access, ResolutionError> {
    if !vertices.contains_key(&vertex) {
        return Err(ResolutionError::UnknownVertex(vertex));
    }
    Ok(match locks.get(&vertex) {
        Some(&owner) if owner != user => Access::Deny(DenyReason::OlrLocked),
        _ => Access::Allow,
    })
}

/// Active grab per user: operation kind and the grab's start sequence number.
pub type ActiveOps = [Option<(OperationKind, u64)>; 2];

/// Action-level restriction: refuse a grab whose operation kind is already
/// held by the other user on an intersecting group. The earlier grab (lower
/// sequence number) keeps precedence.
pub fn check_alr_grab(user: UserId, op: OperationKind, partition: &OverlapPartition, active: &ActiveOps) -> Access {
    if partition.joint.is_empty() {
        return Access::Allow;
    }
    match active[user.other().index()] {
        Some((other_op, _)) if other_op == op => Access::Deny(DenyReason::AlrSameOp),
        _ => Access::Allow,
    }
}

/// Displacement of every group vertex under `delta` applied about `pivot`.
pub fn induced_displacements<T: Scalar>(
    delta: &TransformDelta<T>,
    group: &Positions<T>,
    pivot: Vec3<T>,
) -> DisplacementField<T> {
    group.iter().map(|(&id, &p)| (id, delta.apply_point(p, pivot) - p)).collect()
}

pub fn resolve_additive<T: Scalar>(d1: Vec3<T>, d2: Vec3<T>) -> Vec3<T> {
    d1 + d2
}

pub fn resolve_average<T: Scalar>(d1: Vec3<T>, d2: Vec3<T>) -> Vec3<T> {
    (d1 + d2) * T::half()
}

/// Per-axis agreement. A near-zero component abstains rather than vetoing,
/// so the other user's component passes through unchanged.
pub fn resolve_intersection<T: Scalar>(d1: Vec3<T>, d2: Vec3<T>) -> Vec3<T> {
    let eps = T::lit(INTERSECTION_EPSILON);
    d1.zip_map(d2, |a, b| {
        let (a_idle, b_idle) = (a.abs() < eps, b.abs() < eps);
        match (a_idle, b_idle) {
            (true, true) => T::zero(),
            (true, false) => b,
            (false, true) => a,
            _ if a.signum() != b.signum() => T::zero(),
            _ if a.abs() <= b.abs() => a,
            _ => b,
        }
    })
}

/// Last writer wins: the grab started later (higher sequence number).
pub fn resolve_second_user<T: Scalar>(d1: (Vec3<T>, u64), d2: (Vec3<T>, u64)) -> Vec3<T> {
    if d2.1 > d1.1 {
        d2.0
    } else {
        d1.0
    }
}

/// One user's resolved per-tick input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrabInput<T> {
    pub op: OperationKind,
    /// Server sequence number of the grab start.
    pub seq: u64,
    pub pivot: Vec3<T>,
    pub delta: TransformDelta<T>,
}

/// Resolves one tick. Disjoint vertices follow their owner alone, joint
/// vertices with two inputs are combined, and vertices outside both
/// selections never move.
///
/// A vertex moved by a single input is set to its transformed image
/// directly, so a lone user's result matches [`crate::geometry::apply_delta`]
/// exactly.
pub fn resolve_tick<T: Scalar>(
    positions: &Positions<T>,
    inputs: &[Option<GrabInput<T>>; 2],
    partition: &OverlapPartition,
    strategy: StrategyConfig,
) -> Result<Positions<T>, ResolutionError> {
    if strategy == StrategyConfig::ObjectLevelRestriction && !partition.joint.is_empty() {
        return Err(ResolutionError::Invariant("overlapping selections under object-level restriction"));
    }
    let mut out = positions.clone();
    let image = |input: &GrabInput<T>, v: VertexId| -> Result<(Vec3<T>, Vec3<T>), ResolutionError> {
        let p = *positions.get(&v).ok_or(ResolutionError::UnknownVertex(v))?;
        Ok((p, input.delta.apply_point(p, input.pivot)))
    };

    for (user, own) in [(UserId::FIRST, &partition.disjoint_a), (UserId::SECOND, &partition.disjoint_b)] {
        if let Some(input) = &inputs[user.index()] {
            for &v in own {
                out.insert(v, image(input, v)?.1);
            }
        }
    }

    for &v in &partition.joint {
        let moved = match (&inputs[0], &inputs[1]) {
            (None, None) => continue,
            (Some(a), None) => image(a, v)?.1,
            (None, Some(b)) => image(b, v)?.1,
            (Some(a), Some(b)) => {
                let (p, ia) = image(a, v)?;
                let (_, ib) = image(b, v)?;
                let (da, db) = (ia - p, ib - p);
                let combined = if a.op != b.op {
                    resolve_additive(da, db)
                } else {
                    match strategy {
                        StrategyConfig::Reactive(ReactiveMethod::Additive) => resolve_additive(da, db),
                        StrategyConfig::Reactive(ReactiveMethod::Averaging) => resolve_average(da, db),
                        StrategyConfig::Reactive(ReactiveMethod::Intersection) => resolve_intersection(da, db),
                        StrategyConfig::Reactive(ReactiveMethod::SecondUserPriority) => {
                            resolve_second_user((da, a.seq), (db, b.seq))
                        }
                        StrategyConfig::ActionLevelRestriction => {
                            return Err(ResolutionError::Invariant(
                                "same-kind grabs on intersecting groups under action-level restriction",
                            ))
                        }
                        StrategyConfig::ObjectLevelRestriction => unreachable!("rejected above"),
                    }
                };
                p + combined
            }
        };
        out.insert(v, moved);
    }
    Ok(out)
}
