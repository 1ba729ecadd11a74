use std::collections::BTreeSet;

use super::*;
use crate::geometry::{Vec3, VertexId};
use crate::resolution::{DenyReason, OperationKind, ReactiveMethod, StrategyConfig, UserId};
use crate::scenariogen::gen_cube;

const A: UserId = UserId::FIRST;
const B: UserId = UserId::SECOND;

fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

fn engine(strategy: StrategyConfig) -> Engine {
    let cube = gen_cube();
    let mut e = Engine::new(cube.clone(), cube, strategy, TICK_HZ, 0, Vec::new()).unwrap();
    assert_eq!(e.inbound(None, Inbound::Join { name: "a".into() }, 0).unwrap().user, Some(A));
    assert_eq!(e.inbound(None, Inbound::Join { name: "b".into() }, 0).unwrap().user, Some(B));
    e
}

fn send(e: &mut Engine, u: UserId, msg: Inbound) -> Vec<Envelope> {
    e.inbound(Some(u), msg, 0).unwrap().replies
}

fn denial(replies: &[Envelope]) -> Option<DenyReason> {
    replies.iter().find_map(|r| match r.msg {
        Outbound::Deny { reason, .. } => Some(reason),
        _ => None,
    })
}

fn group(e: &mut Engine, u: UserId, ids: impl IntoIterator<Item = u32>) -> Option<DenyReason> {
    for i in ids {
        if let Some(r) = denial(&send(e, u, Inbound::Select { vertex: VertexId(i) })) {
            return Some(r);
        }
    }
    denial(&send(e, u, Inbound::ConfirmGroup {}))
}

fn ids(r: impl IntoIterator<Item = u32>) -> BTreeSet<VertexId> {
    r.into_iter().map(VertexId).collect()
}

#[test]
fn join_assigns_ids_and_refuses_third() {
    let mut e = engine(StrategyConfig::ActionLevelRestriction);
    let d = e.inbound(None, Inbound::Join { name: "c".into() }, 0).unwrap();
    assert_eq!(d.user, None);
    assert_eq!(denial(&d.replies), Some(DenyReason::SessionFull));
    assert_eq!(d.replies[0].to, Recipient::Sender);
}

#[test]
fn unjoined_messages_are_refused() {
    let cube = gen_cube();
    let mut e = Engine::new(cube.clone(), cube, StrategyConfig::ActionLevelRestriction, TICK_HZ, 0, Vec::new())
        .unwrap();
    let d = e.inbound(None, Inbound::Select { vertex: VertexId(0) }, 0).unwrap();
    assert_eq!(denial(&d.replies), Some(DenyReason::NotJoined));
}

#[test]
fn olr_locks_selected_vertices() {
    let mut e = engine(StrategyConfig::ObjectLevelRestriction);
    assert_eq!(group(&mut e, A, 0..4), None);
    let before = e.state().clone();
    let r = send(&mut e, B, Inbound::Select { vertex: VertexId(2) });
    assert_eq!(denial(&r), Some(DenyReason::OlrLocked));
    assert_eq!(e.state(), &before);
    assert_eq!(group(&mut e, B, [4, 5]), None);
    assert_eq!(denial(&send(&mut e, A, Inbound::Select { vertex: VertexId(0) })), None);
    assert!(e.state().color_state(A).values().all(|c| *c != ColorState::Shared));

    // cancelling releases the locks
    send(&mut e, A, Inbound::CancelGroup {});
    assert_eq!(denial(&send(&mut e, B, Inbound::Select { vertex: VertexId(2) })), None);
}

#[test]
fn confirm_without_selection_is_denied() {
    let mut e = engine(StrategyConfig::Reactive(ReactiveMethod::Averaging));
    assert_eq!(denial(&send(&mut e, A, Inbound::ConfirmGroup {})), Some(DenyReason::NoGroup));
    assert_eq!(denial(&send(&mut e, A, Inbound::CancelGroup {})), Some(DenyReason::NoGroup));
}

#[test]
fn grab_checks() {
    let mut e = engine(StrategyConfig::Reactive(ReactiveMethod::Additive));
    let grab = |vertex| Inbound::Grab { vertex: VertexId(vertex), handle: v(0.0, 0.0, 0.0) };
    assert_eq!(denial(&send(&mut e, A, grab(0))), Some(DenyReason::NoGroup));
    assert_eq!(denial(&send(&mut e, A, grab(42))), Some(DenyReason::BadVertex));
    assert_eq!(denial(&send(&mut e, A, Inbound::Select { vertex: VertexId(8) })), Some(DenyReason::BadVertex));
    group(&mut e, A, [0, 1]);
    assert_eq!(denial(&send(&mut e, A, grab(2))), Some(DenyReason::NoGroup));
    assert_eq!(denial(&send(&mut e, A, grab(0))), None);
    assert_eq!(denial(&send(&mut e, A, grab(1))), Some(DenyReason::GrabActive));
    send(&mut e, A, Inbound::Select { vertex: VertexId(3) });
    assert_eq!(denial(&send(&mut e, A, Inbound::ConfirmGroup {})), Some(DenyReason::GrabActive));
}

#[test]
fn grab_at_centroid_is_degenerate_for_rotate_and_scale() {
    // Three collinear vertices: the middle one is the group centroid.
    let mut model = gen_cube();
    model.vertices.insert(VertexId(1), v(2.0, 0.0, 0.0));
    model.vertices.insert(VertexId(2), v(1.0, 0.0, 0.0));
    let mut e = Engine::new(model.clone(), model, StrategyConfig::Reactive(ReactiveMethod::Additive), 90, 0, Vec::new())
        .unwrap();
    e.inbound(None, Inbound::Join { name: "a".into() }, 0).unwrap();
    group(&mut e, A, [0, 1, 2]);
    for op in [OperationKind::Rotate, OperationKind::Scale] {
        send(&mut e, A, Inbound::SetOp { op });
        let r = send(&mut e, A, Inbound::Grab { vertex: VertexId(2), handle: v(1.0, 0.0, 0.0) });
        assert_eq!(denial(&r), Some(DenyReason::DegeneratePivot));
    }
    send(&mut e, A, Inbound::SetOp { op: OperationKind::Translate });
    assert_eq!(denial(&send(&mut e, A, Inbound::Grab { vertex: VertexId(2), handle: v(1.0, 0.0, 0.0) })), None);
}

#[test]
fn idle_tick_only_advances_counter() {
    let mut e = engine(StrategyConfig::ActionLevelRestriction);
    let s0 = e.tick(11).unwrap();
    let s1 = e.tick(22).unwrap();
    assert_eq!(s1.tick, s0.tick + 1);
    assert_eq!(s1.positions, s0.positions);
    assert_eq!(s1.selections, s0.selections);
}

#[test]
fn single_translation_follows_handle() {
    let mut e = engine(StrategyConfig::Reactive(ReactiveMethod::Intersection));
    group(&mut e, A, [0, 1, 2, 3]);
    let start = e.state().model.vertices.clone();
    send(&mut e, A, Inbound::Grab { vertex: VertexId(0), handle: v(5.0, 5.0, 5.0) });
    send(&mut e, A, Inbound::Move { handle: v(5.1, 5.0, 5.0) });
    // only the latest sample in a tick counts
    send(&mut e, A, Inbound::Move { handle: v(5.3, 5.0, 4.9) });
    let snap = e.tick(11).unwrap();
    assert_eq!(snap.active_ops[&A], Some(OperationKind::Translate));
    for i in 0..8 {
        let d = snap.positions[&VertexId(i)] - start[&VertexId(i)];
        let expected = if i < 4 { v(0.3, 0.0, -0.1) } else { v(0.0, 0.0, 0.0) };
        assert!((d - expected).max_abs() < 1e-12, "v{i}");
    }
    send(&mut e, A, Inbound::Release {});
    let snap = e.tick(22).unwrap();
    assert_eq!(snap.active_ops[&A], None);
}

/// Overlapping translation scenario: A translates {v1..v4} by (-0.2, 0.1, 0)
/// first, B translates {v3..v6} by (0.4, 0.2, 0.1) afterwards.
fn overlap_scenario(strategy: StrategyConfig) -> (Positionsd, Positionsd) {
    let mut e = engine(strategy);
    group(&mut e, A, 0..4);
    group(&mut e, B, 2..6);
    let start = e.state().model.vertices.clone();
    send(&mut e, A, Inbound::Grab { vertex: VertexId(0), handle: v(1.0, 1.0, 1.0) });
    send(&mut e, B, Inbound::Grab { vertex: VertexId(4), handle: v(0.0, 0.0, 0.0) });
    send(&mut e, A, Inbound::Move { handle: v(0.8, 1.1, 1.0) });
    send(&mut e, B, Inbound::Move { handle: v(0.4, 0.2, 0.1) });
    let snap = e.tick(11).unwrap();
    (start, snap.positions)
}

type Positionsd = crate::geometry::Positions<f64>;

#[test]
fn overlapping_translation_reactive_outcomes() {
    let cases = [
        (ReactiveMethod::Additive, v(0.2, 0.3, 0.1)),
        (ReactiveMethod::Averaging, v(0.1, 0.15, 0.05)),
        (ReactiveMethod::Intersection, v(0.0, 0.1, 0.1)),
        (ReactiveMethod::SecondUserPriority, v(0.4, 0.2, 0.1)),
    ];
    for (method, joint) in cases {
        let (start, end) = overlap_scenario(StrategyConfig::Reactive(method));
        for i in 0..8u32 {
            let d = end[&VertexId(i)] - start[&VertexId(i)];
            let expected = match i {
                0 | 1 => v(-0.2, 0.1, 0.0),
                2 | 3 => joint,
                4 | 5 => v(0.4, 0.2, 0.1),
                _ => v(0.0, 0.0, 0.0),
            };
            assert!((d - expected).max_abs() < 1e-9, "{method:?} v{}: {d:?}", i + 1);
        }
    }
}

#[test]
fn alr_refuses_same_op_and_stacks_different_ops() {
    let mut e = engine(StrategyConfig::ActionLevelRestriction);
    group(&mut e, A, 0..4);
    group(&mut e, B, 2..6);
    send(&mut e, A, Inbound::SetOp { op: OperationKind::Rotate });
    send(&mut e, B, Inbound::SetOp { op: OperationKind::Rotate });
    assert_eq!(denial(&send(&mut e, A, Inbound::Grab { vertex: VertexId(0), handle: v(0.0, 0.0, 0.0) })), None);
    let r = send(&mut e, B, Inbound::Grab { vertex: VertexId(5), handle: v(1.0, 0.0, 1.0) });
    assert_eq!(denial(&r), Some(DenyReason::AlrSameOp));
    send(&mut e, B, Inbound::SetOp { op: OperationKind::Scale });
    assert_eq!(denial(&send(&mut e, B, Inbound::Grab { vertex: VertexId(5), handle: v(1.0, 0.0, 1.0) })), None);
    let snap = e.tick(11).unwrap();
    assert_eq!(snap.active_ops[&A], Some(OperationKind::Rotate));
    assert_eq!(snap.active_ops[&B], Some(OperationKind::Scale));
}

#[test]
fn color_states() {
    let mut e = engine(StrategyConfig::Reactive(ReactiveMethod::Averaging));
    assert!(e.state().color_state(A).values().all(|c| *c == ColorState::Available));
    group(&mut e, A, 0..4);
    group(&mut e, B, 2..6);
    for viewer in [A, B] {
        let c = e.state().color_state(viewer);
        assert_eq!(c[&VertexId(2)], ColorState::Shared);
        assert_eq!(c[&VertexId(3)], ColorState::Shared);
        assert_eq!(c[&VertexId(7)], ColorState::Available);
    }
    let (ca, cb) = (e.state().color_state(A), e.state().color_state(B));
    for (id, a) in &ca {
        let swapped = match a {
            ColorState::Mine => ColorState::Partner,
            ColorState::Partner => ColorState::Mine,
            other => *other,
        };
        assert_eq!(cb[id], swapped);
    }
    // pending selections count too
    send(&mut e, B, Inbound::Select { vertex: VertexId(0) });
    assert_eq!(e.state().color_state(A)[&VertexId(0)], ColorState::Shared);
}

#[test]
fn match_check_threshold() {
    let cube = gen_cube();
    let r = match_check(&cube.vertices, &cube.vertices, MATCH_THRESHOLD).unwrap();
    assert!(r.matched);
    assert!(r.distances.values().all(|d| *d == 0.0));

    let mut off = cube.vertices.clone();
    off.insert(VertexId(6), cube.vertices[&VertexId(6)] + v(0.06, 0.0, 0.0));
    assert!(!match_check(&off, &cube.vertices, MATCH_THRESHOLD).unwrap().matched);

    // 0.05 is not exactly representable as a sum, so offset from the origin corner.
    let mut edge = cube.vertices.clone();
    edge.insert(VertexId(0), v(0.05, 0.0, 0.0));
    let r = match_check(&edge, &cube.vertices, MATCH_THRESHOLD).unwrap();
    assert_eq!(r.max_error, 0.05);
    assert!(r.matched);

    let mut fewer = cube.vertices.clone();
    fewer.remove(&VertexId(7));
    assert_eq!(match_check(&fewer, &cube.vertices, MATCH_THRESHOLD), Err(MatchError::IdMismatch));
}

#[test]
fn match_check_message_broadcasts_result() {
    let mut e = engine(StrategyConfig::ActionLevelRestriction);
    let r = send(&mut e, A, Inbound::MatchCheck {});
    assert_eq!(r, vec![Envelope::broadcast(Outbound::MatchResult { matched: true, max_error_m: 0.0 })]);
}

#[test]
fn leave_mid_grab_releases_everything() {
    let mut e = engine(StrategyConfig::ObjectLevelRestriction);
    group(&mut e, A, 0..4);
    send(&mut e, A, Inbound::Grab { vertex: VertexId(0), handle: v(0.0, 0.0, 0.0) });
    let r = send(&mut e, A, Inbound::Leave {});
    assert_eq!(r, vec![Envelope::to_user(B, Outbound::PeerLeft {})]);
    assert!(e.state().user(A).grab.is_none());
    assert!(e.state().user(A).group.is_none());
    assert!(e.state().locks.is_empty());
    assert_eq!(group(&mut e, B, 0..4), None);
    // the freed slot can be taken by a new participant
    assert_eq!(e.inbound(None, Inbound::Join { name: "c".into() }, 0).unwrap().user, Some(A));
}

#[test]
fn malformed_input_drops_sender() {
    let mut e = engine(StrategyConfig::ActionLevelRestriction);
    let r = send(&mut e, A, Inbound::parse("{\"type\":\"explode\"}"));
    assert_eq!(denial(&r), Some(DenyReason::Malformed));
    assert!(!e.state().user(A).joined);
    assert!(r.contains(&Envelope::to_user(B, Outbound::PeerLeft {})));
}

#[test]
fn scale_grab_snaps_back_onto_locus() {
    let mut e = engine(StrategyConfig::Reactive(ReactiveMethod::Averaging));
    group(&mut e, A, [0, 1, 2, 3]);
    send(&mut e, A, Inbound::SetOp { op: OperationKind::Scale });
    // pivot (0.5, 0.5, 0); grab v1 at the origin
    send(&mut e, A, Inbound::Grab { vertex: VertexId(0), handle: v(0.0, 0.0, 0.0) });
    for k in 1..=5 {
        send(&mut e, A, Inbound::Move { handle: v(-0.1 * k as f64, -0.07 * k as f64, 0.0) });
        e.tick(k).unwrap();
    }
    send(&mut e, A, Inbound::Release {});
    let snap = e.tick(6).unwrap();
    let pivot = v(0.5, 0.5, 0.0);
    let handle_end = v(-0.5, -0.35, 0.0);
    let s = handle_end.distance(pivot) / v(0.0, 0.0, 0.0).distance(pivot);
    let snapped = pivot + (v(0.0, 0.0, 0.0) - pivot) * s;
    assert!((snap.positions[&VertexId(0)] - snapped).max_abs() < 1e-12);
    let expected = pivot + (v(1.0, 1.0, 0.0) - pivot) * s;
    assert!((snap.positions[&VertexId(3)] - expected).max_abs() < 1e-12);
    // the face stays planar
    assert!(snap.positions.range(VertexId(0)..VertexId(4)).all(|(_, p)| p.z.abs() < 1e-12));
}

#[test]
fn rotate_grab_orbits_group_about_centroid() {
    let mut e = engine(StrategyConfig::Reactive(ReactiveMethod::Averaging));
    group(&mut e, A, [0, 1, 2, 3]);
    send(&mut e, A, Inbound::SetOp { op: OperationKind::Rotate });
    send(&mut e, A, Inbound::Grab { vertex: VertexId(1), handle: v(1.0, 0.0, 0.0) });
    // drag (1,0,0) → (1,1,0) about pivot (0.5,0.5,0): 90° about +z
    send(&mut e, A, Inbound::Move { handle: v(1.0, 1.0, 0.0) });
    let snap = e.tick(1).unwrap();
    let expected = [v(1.0, 0.0, 0.0), v(1.0, 1.0, 0.0), v(0.0, 0.0, 0.0), v(0.0, 1.0, 0.0)];
    for (i, exp) in expected.iter().enumerate() {
        assert!((snap.positions[&VertexId(i as u32)] - *exp).max_abs() < 1e-12, "v{i}");
    }
}

#[test]
fn selections_and_hashes_are_reported() {
    let mut e = engine(StrategyConfig::Reactive(ReactiveMethod::Additive));
    group(&mut e, A, [0, 1]);
    send(&mut e, B, Inbound::Select { vertex: VertexId(1) });
    let snap = e.tick(1).unwrap();
    assert_eq!(snap.selections[&A], vec![VertexId(0), VertexId(1)]);
    assert_eq!(snap.selections[&B], vec![VertexId(1)]);
    assert_eq!(e.state().group_partition().joint, ids([]));
    let again = snap.clone();
    assert_eq!(snap.state_hash(), again.state_hash());
    let later = e.tick(2).unwrap();
    assert_ne!(snap.state_hash(), later.state_hash());
}

#[test]
fn every_event_is_sequenced() {
    let mut e = engine(StrategyConfig::ObjectLevelRestriction);
    group(&mut e, A, 0..4);
    send(&mut e, B, Inbound::Select { vertex: VertexId(0) });
    e.tick(5).unwrap();
    let log = e.sink();
    for (i, ev) in log.iter().enumerate() {
        assert_eq!(ev.seq, i as u64);
    }
    assert!(matches!(log[0].payload, Payload::Out(Outbound::SessionStart { .. })));
    assert!(log.windows(2).all(|w| w[0].t_ms <= w[1].t_ms));
}
