//! Seeded random two-user scenarios over the unit cube.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Vec3, VertexId};
use crate::resolution::{OperationKind, StrategyConfig, UserId};
use crate::scenariogen::{gen_cube, gen_target, TargetSpec};
use crate::session::Inbound;

use super::{Action, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomScenarioConfig {
    pub seed: u64,
    pub strategy: StrategyConfig,
    /// Upper bound on virtual duration.
    pub max_duration_ms: u64,
    /// Allow leave/rejoin and malformed input.
    pub churn: bool,
}

impl RandomScenarioConfig {
    pub fn new(seed: u64, strategy: StrategyConfig) -> Self {
        Self { seed, strategy, max_duration_ms: 20_000, churn: true }
    }
}

fn rand_point(rng: &mut ChaCha8Rng) -> Vec3<f64> {
    Vec3::new(rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5), rng.gen_range(-0.5..1.5))
}

fn user_script(rng: &mut ChaCha8Rng, user: UserId, n_vertices: u32, duration: u64, churn: bool) -> Vec<Action> {
    let mut out = Vec::new();
    let mut t = rng.gen_range(0..400u64);
    let mut group: Vec<VertexId> = Vec::new();
    let mut push = |t: u64, msg: Inbound| out.push(Action { t_ms: t, user, msg });
    while t < duration {
        let roll: f64 = rng.gen();
        if group.is_empty() || roll < 0.15 {
            if !group.is_empty() && rng.gen_bool(0.6) {
                push(t, Inbound::CancelGroup {});
                group.clear();
                t += rng.gen_range(5..60);
            }
            let k = rng.gen_range(1..=5);
            for _ in 0..k {
                let v = VertexId(rng.gen_range(0..n_vertices));
                push(t, Inbound::Select { vertex: v });
                if !group.contains(&v) {
                    group.push(v);
                }
                t += rng.gen_range(5..80);
            }
            if rng.gen_bool(0.15) {
                let v = group.remove(rng.gen_range(0..group.len()));
                push(t, Inbound::Deselect { vertex: v });
                t += rng.gen_range(5..40);
            }
            if !group.is_empty() {
                push(t, Inbound::ConfirmGroup {});
            }
        } else if roll < 0.30 {
            let op = *OperationKind::ALL.choose(rng).expect("non-empty");
            push(t, Inbound::SetOp { op });
        } else if roll < 0.85 {
            let v = *group.choose(rng).expect("non-empty group");
            let mut handle = rand_point(rng);
            push(t, Inbound::Grab { vertex: v, handle });
            let moves = rng.gen_range(3..150);
            let step = rng.gen_range(0.002..0.03);
            let drift = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * step;
            for _ in 0..moves {
                t += rng.gen_range(4..25);
                let jitter = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                handle = handle + drift + jitter * (step * 0.5);
                push(t, Inbound::Move { handle });
            }
            t += rng.gen_range(1..30);
            push(t, Inbound::Release {});
        } else if roll < 0.90 {
            push(t, Inbound::MatchCheck {});
        } else if churn && roll < 0.92 {
            push(t, Inbound::Leave {});
            group.clear();
            t += rng.gen_range(50..500);
            push(t, Inbound::Join { name: format!("user{}", user.0) });
        } else if churn && roll < 0.925 {
            push(t, Inbound::Malformed { raw: "{\"type\":\"teleport\"}".into() });
            group.clear();
            t += rng.gen_range(50..500);
            push(t, Inbound::Join { name: format!("user{}", user.0) });
        }
        t += rng.gen_range(10..400);
    }
    out
}

/// Two independent user scripts over the cube, merged in `(t_ms, user)` order.
pub fn random_scenario(config: &RandomScenarioConfig) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cube = gen_cube();
    let target = gen_target(&cube, &TargetSpec::new(config.seed, 2, 2)).unwrap_or_else(|_| cube.clone());
    let duration = rng.gen_range(500..=config.max_duration_ms.max(500));
    let n = cube.len() as u32;
    let mut actions = user_script(&mut rng, UserId::FIRST, n, duration, config.churn);
    actions.extend(user_script(&mut rng, UserId::SECOND, n, duration, config.churn));
    actions.retain(|a| a.t_ms <= config.max_duration_ms);
    actions.sort_by_key(|a| (a.t_ms, a.user));
    let mut s = Scenario::new(cube, target, config.strategy, actions);
    s.end_ms = Some(duration.min(config.max_duration_ms));
    s
}
