//! Vectors, quaternions, wireframe models and the grab transformation mechanics.

mod model;
mod ops;
mod quat;
mod vec3;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{ModelError, WireframeModel};
pub use ops::{
    apply_delta, centroid, centroid_iter, clamp_scale, euler_compose, euler_decompose, minimal_arc_rotation,
    rotation_delta, scale_delta, snap_back, translation_delta, EulerDecomposition, Positions, TransformDelta,
    GIMBAL_MARGIN, MAX_SCALE, MIN_SCALE, PIVOT_EPSILON, UNIT_TOLERANCE,
};
pub use quat::Quat;
pub use vec3::Vec3;

/// Vertex identifier, dense from zero within a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl<'de> Deserialize<'de> for VertexId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        crate::id_key::deserialize_index(d, u32::MAX as u64).map(|v| VertexId(v as u32))
    }
}

impl std::fmt::Display for VertexId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("centroid of an empty vertex set")]
    EmptySet,
    #[error("direction is not unit length (norm {norm})")]
    NotUnit { norm: f64 },
    #[error("grabbed point {distance} m from the pivot is too close to define a rotation or scale")]
    DegeneratePivot { distance: f64 },
    #[error("scale factor must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("non-finite transform component")]
    NonFinite,
}
