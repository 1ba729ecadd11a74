//! Random protocol traffic against the state machine with safety checks
//! after every step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Vec3, VertexId};
use crate::resolution::{OperationKind, StrategyConfig, UserId};
use crate::scenariogen::gen_cube;
use crate::session::{ColorState, Engine, Inbound, SessionState, TICK_HZ};

use super::HarnessError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FuzzReport {
    pub messages: usize,
    pub ticks: u64,
    pub denies: usize,
    pub max_joint_under_alr: usize,
    pub violations: Vec<String>,
}

/// Safety properties every reachable state must satisfy.
pub fn check_safety(state: &SessionState) -> Result<(), String> {
    for u in &state.users {
        if u.group.as_ref().is_some_and(|g| g.is_empty()) {
            return Err("empty confirmed group".into());
        }
        if let Some(g) = &u.grab {
            if !u.group.as_ref().is_some_and(|grp| grp.contains(&g.vertex)) {
                return Err("grab outside its owner's group".into());
            }
        }
        if !u.joined && (u.group.is_some() || u.grab.is_some() || !u.pending.is_empty()) {
            return Err("departed user still holds a selection".into());
        }
    }
    match state.strategy {
        StrategyConfig::ObjectLevelRestriction => {
            let (a, b) = (state.users[0].selection(), state.users[1].selection());
            if !a.is_disjoint(&b) {
                return Err(format!("overlapping selections under OLR: {:?}", a.intersection(&b).collect::<Vec<_>>()));
            }
            if state.color_state(UserId::FIRST).values().any(|c| *c == ColorState::Shared) {
                return Err("shared color under OLR".into());
            }
        }
        StrategyConfig::ActionLevelRestriction => {
            let ops = state.active_ops();
            if let (Some((a, _)), Some((b, _))) = (ops[0], ops[1]) {
                if a == b && !state.group_partition().joint.is_empty() {
                    return Err(format!("concurrent {a:?} grabs on intersecting groups under ALR"));
                }
            }
        }
        StrategyConfig::Reactive(_) => {}
    }
    if state.strategy != StrategyConfig::ObjectLevelRestriction && !state.locks.is_empty() {
        return Err("lock table populated outside OLR".into());
    }
    Ok(())
}

fn random_message(rng: &mut ChaCha8Rng, n: u32) -> Inbound {
    let vertex = VertexId(rng.gen_range(0..=n));
    let point = |rng: &mut ChaCha8Rng| Vec3::new(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0));
    let roll: f64 = rng.gen();
    match roll {
        r if r < 0.25 => Inbound::Select { vertex },
        r if r < 0.32 => Inbound::Deselect { vertex },
        r if r < 0.44 => Inbound::ConfirmGroup {},
        r if r < 0.47 => Inbound::CancelGroup {},
        r if r < 0.55 => Inbound::SetOp { op: OperationKind::ALL[rng.gen_range(0..3)] },
        r if r < 0.67 => Inbound::Grab { vertex, handle: point(rng) },
        r if r < 0.88 => Inbound::Move { handle: point(rng) },
        r if r < 0.94 => Inbound::Release {},
        r if r < 0.96 => Inbound::MatchCheck {},
        r if r < 0.975 => Inbound::Leave {},
        r if r < 0.995 => Inbound::Join { name: "fuzz".into() },
        _ => Inbound::parse("{\"type\":\"select\",\"vertex\":-1}"),
    }
}

/// Sends `messages` random messages (with ticks interleaved) and records
/// any safety violation.
pub fn fuzz(seed: u64, messages: usize, strategy: StrategyConfig) -> Result<FuzzReport, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cube = gen_cube();
    let n = cube.len() as u32;
    let mut engine = Engine::new(cube.clone(), cube, strategy, TICK_HZ, 0, Vec::new())?;
    let mut conn: [Option<UserId>; 2] = [None, None];
    for c in conn.iter_mut() {
        *c = engine.inbound(None, Inbound::Join { name: "fuzz".into() }, 0)?.user;
    }
    let mut report = FuzzReport::default();
    let mut t = 0u64;
    for _ in 0..messages {
        t += rng.gen_range(0..6);
        let idx = rng.gen_range(0..2);
        let msg = random_message(&mut rng, n);
        let delivery = engine.inbound(conn[idx], msg.clone(), t)?;
        report.messages += 1;
        report.denies += delivery.replies.iter().filter(|r| matches!(r.msg, crate::session::Outbound::Deny { .. })).count();
        conn[idx] = match msg {
            Inbound::Leave {} => None,
            Inbound::Malformed { .. } if conn[idx].is_some() => None,
            _ => delivery.user,
        };
        if rng.gen_bool(0.3) {
            match engine.tick(t) {
                Ok(_) => report.ticks += 1,
                Err(e) => report.violations.push(format!("tick failed: {e}")),
            }
        }
        if let Err(v) = check_safety(engine.state()) {
            report.violations.push(v);
        }
        if strategy == StrategyConfig::ActionLevelRestriction {
            report.max_joint_under_alr = report.max_joint_under_alr.max(engine.state().group_partition().joint.len());
        }
        if report.violations.len() >= 10 {
            break;
        }
    }
    Ok(report)
}
