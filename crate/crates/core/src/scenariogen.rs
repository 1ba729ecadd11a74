//! Initial cube and seeded target models for the model-matching task.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{centroid_iter, Quat, TransformDelta, Vec3, VertexId, WireframeModel};
use crate::resolution::OperationKind;
use crate::session::{match_check, MATCH_THRESHOLD};

pub const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("invalid target spec: {0}")]
    InvalidSpec(String),
    #[error("no admissible target after {0} attempts")]
    Unsatisfiable(u64),
}

/// Axis-aligned 1 m cube with corners at `{0,1}³`; vertex `i` sits at
/// `(i & 1, (i >> 1) & 1, (i >> 2) & 1)`.
pub fn gen_cube() -> WireframeModel {
    let corner = |i: u32| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64);
    let vertices = (0..8).map(|i| (VertexId(i), corner(i))).collect();
    let mut edges = Vec::new();
    for a in 0..8u32 {
        for bit in [1, 2, 4] {
            if a & bit == 0 {
                edges.push([VertexId(a), VertexId(a | bit)]);
            }
        }
    }
    let mut faces = Vec::new();
    for axis in [1u32, 2, 4] {
        let others: Vec<u32> = [1u32, 2, 4].into_iter().filter(|b| *b != axis).collect();
        let (u, w) = (others[0], others[1]);
        for side in [0, axis] {
            faces.push(vec![side, side | u, side | u | w, side | w].into_iter().map(VertexId).collect());
        }
    }
    WireframeModel::new(vertices, edges, faces).expect("cube is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub seed: u64,
    pub faces_transformed: usize,
    pub ops_per_face: usize,
    pub op_pool: Vec<OperationKind>,
    /// Per-axis translation magnitude, meters.
    pub translation_range: (f64, f64),
    /// Rotation magnitude about one sampled axis, degrees.
    pub rotation_range_deg: (f64, f64),
    pub scale_range: (f64, f64),
}

impl TargetSpec {
    pub fn new(seed: u64, faces_transformed: usize, ops_per_face: usize) -> Self {
        Self {
            seed,
            faces_transformed,
            ops_per_face,
            op_pool: OperationKind::ALL.to_vec(),
            translation_range: (0.1, 0.4),
            rotation_range_deg: (15.0, 60.0),
            scale_range: (0.6, 1.6),
        }
    }

    fn validate(&self, base: &WireframeModel) -> Result<(), GenerationError> {
        let bad = |m: &str| Err(GenerationError::InvalidSpec(m.to_string()));
        if self.faces_transformed < 2 || self.ops_per_face < 2 {
            return bad("at least two faces with two operations each");
        }
        if self.faces_transformed > base.faces.len() {
            return bad("more transformed faces than the base model has");
        }
        if self.op_pool.is_empty() {
            return bad("empty operation pool");
        }
        let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ordered(self.translation_range) || !ordered(self.rotation_range_deg) || !ordered(self.scale_range) {
            return bad("ranges must be finite with min <= max");
        }
        if self.translation_range.0 < 0.0 || self.rotation_range_deg.0 < 0.0 || self.scale_range.0 <= 0.0 {
            return bad("magnitudes must be non-negative and scale positive");
        }
        Ok(())
    }
}

fn signed(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let m = rng.gen_range(lo..=hi);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

fn sample_delta(rng: &mut ChaCha8Rng, op: OperationKind, spec: &TargetSpec) -> TransformDelta<f64> {
    match op {
        OperationKind::Translate => {
            let r = spec.translation_range;
            TransformDelta::translation(Vec3::new(signed(rng, r), signed(rng, r), signed(rng, r)))
        }
        OperationKind::Rotate => {
            let axis = *[Vec3::unit_x(), Vec3::unit_y(), Vec3::unit_z()].choose(rng).expect("non-empty");
            let angle = signed(rng, spec.rotation_range_deg).to_radians();
            TransformDelta::rotation(Quat::from_axis_angle(axis, angle).expect("unit axis"))
        }
        OperationKind::Scale => {
            let (lo, hi) = spec.scale_range;
            TransformDelta::scaling(rng.gen_range(lo..=hi)).expect("positive scale")
        }
    }
}

fn attempt(base: &WireframeModel, spec: &TargetSpec, seed: u64) -> Option<WireframeModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = base.vertices.clone();
    let face_idx = rand::seq::index::sample(&mut rng, base.faces.len(), spec.faces_transformed).into_vec();
    for &f in &face_idx {
        let face = &base.faces[f];
        for _ in 0..spec.ops_per_face {
            let op = *spec.op_pool.choose(&mut rng).expect("validated non-empty");
            let delta = sample_delta(&mut rng, op, spec);
            let pivot = centroid_iter(face.iter().map(|v| positions[v])).ok()?;
            for v in face {
                let p = positions[v];
                positions.insert(*v, delta.apply_point(p, pivot));
            }
        }
    }
    // Every transformed face must visibly differ from the base somewhere.
    let moved: BTreeMap<VertexId, f64> =
        positions.iter().map(|(id, p)| (*id, p.distance(base.vertices[id]))).collect();
    if !face_idx.iter().all(|&f| base.faces[f].iter().any(|v| moved[v] > MATCH_THRESHOLD)) {
        return None;
    }
    let target = WireframeModel::new(positions, base.edges.clone(), base.faces.clone()).ok()?;
    let report = match_check(&base.vertices, &target.vertices, MATCH_THRESHOLD).ok()?;
    (!report.matched).then_some(target)
}

/// Applies `spec.ops_per_face` sampled transforms about each chosen face's
/// centroid. Degenerate results are regenerated with the next seed.
pub fn gen_target(base: &WireframeModel, spec: &TargetSpec) -> Result<WireframeModel, GenerationError> {
    spec.validate(base)?;
    (0..MAX_ATTEMPTS)
        .find_map(|i| attempt(base, spec, spec.seed.wrapping_add(i)))
        .ok_or(GenerationError::Unsatisfiable(MAX_ATTEMPTS))
}
