//! Server-authoritative engine for two users co-editing a 3D wireframe with
//! overlapping vertex selections.
//!
//! The geometry and resolution layers are generic over the scalar type
//! ([`Scalar`], implemented for `f32` and `f64`); the session, harness and
//! metrics layers work in `f64` meters through the aliases below.

pub mod geometry;
pub mod harness;
pub mod metrics;
mod id_key;
pub mod resolution;
pub mod scalar;
pub mod scenariogen;
pub mod session;

pub use geometry::{GeometryError, VertexId, WireframeModel};
pub use resolution::{DenyReason, OperationKind, ReactiveMethod, StrategyConfig, UserId};
pub use scalar::Scalar;

/// Scalar used by the session engine and on the wire.
pub type Real = f64;
pub type Vec3d = geometry::Vec3<f64>;
pub type Vec3f = geometry::Vec3<f32>;
pub type Quatd = geometry::Quat<f64>;
pub type Quatf = geometry::Quat<f32>;
pub type TransformDeltad = geometry::TransformDelta<f64>;
pub type Positionsd = geometry::Positions<f64>;
