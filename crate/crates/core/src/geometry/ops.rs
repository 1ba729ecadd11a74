//! Grab mechanics: centroid pivot, translation, minimal-arc rotation and
//! distance-ratio scaling, plus their application to a vertex group.

use std::collections::BTreeMap;

use crate::scalar::Scalar;

use super::{GeometryError, Quat, Vec3, VertexId};

/// Grabs closer than this to the pivot (meters) cannot define a rotation or scale.
pub const PIVOT_EPSILON: f64 = 1e-4;
/// Allowed deviation from unit length for direction inputs.
pub const UNIT_TOLERANCE: f64 = 1e-6;
pub const MIN_SCALE: f64 = 0.01;
pub const MAX_SCALE: f64 = 100.0;
/// Half-angle sums shorter than this are treated as exactly opposite directions.
const ANTIPODAL_EPSILON: f64 = 1e-9;
/// |pitch| this close to π/2 is reported as gimbal proximity.
pub const GIMBAL_MARGIN: f64 = 1e-3;

pub type Positions<T> = BTreeMap<VertexId, Vec3<T>>;

/// Arithmetic mean of the positions.
pub fn centroid<T: Scalar>(positions: &[Vec3<T>]) -> Result<Vec3<T>, GeometryError> {
    centroid_iter(positions.iter().copied())
}

pub fn centroid_iter<T: Scalar>(
    positions: impl IntoIterator<Item = Vec3<T>>,
) -> Result<Vec3<T>, GeometryError> {
    let mut sum = Vec3::zero();
    let mut n = 0usize;
    for p in positions {
        sum += p;
        n += 1;
    }
    if n == 0 {
        return Err(GeometryError::EmptySet);
    }
    Ok(sum / T::lit(n as f64))
}

fn check_unit<T: Scalar>(v: Vec3<T>) -> Result<(), GeometryError> {
    let n = v.norm();
    if !v.is_finite() || (n - T::one()).abs() > T::lit(UNIT_TOLERANCE) {
        return Err(GeometryError::NotUnit { norm: n.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(())
}

/// Smallest-angle rotation taking unit direction `d0` onto unit direction `d1`.
///
/// Opposite directions have no unique answer; the rotation is then a half
/// turn about `normalize(d0 × x̂)`, or `normalize(d0 × ŷ)` when `d0` is
/// within `|d0·x̂| > 0.99` of the x axis.
pub fn minimal_arc_rotation<T: Scalar>(d0: Vec3<T>, d1: Vec3<T>) -> Result<Quat<T>, GeometryError> {
    check_unit(d0)?;
    check_unit(d1)?;
    let d0 = d0.try_normalize().ok_or(GeometryError::NotUnit { norm: 0.0 })?;
    let d1 = d1.try_normalize().ok_or(GeometryError::NotUnit { norm: 0.0 })?;

    // Half-way vector: q = (d0 × h, d0 · h) with h the bisector of d0 and d1.
    let sum = d0 + d1;
    let len = sum.norm();
    if len <= T::lit(ANTIPODAL_EPSILON) {
        let reference =
            if d0.dot(Vec3::unit_x()).abs() > T::lit(0.99) { Vec3::unit_y() } else { Vec3::unit_x() };
        let axis = d0.cross(reference).try_normalize().ok_or(GeometryError::NotUnit { norm: 0.0 })?;
        return Ok(Quat::from_xyzw(axis.x, axis.y, axis.z, T::zero()).unwrap_or_else(Quat::identity));
    }
    let h = sum / len;
    let v = d0.cross(h);
    Ok(Quat::from_xyzw(v.x, v.y, v.z, d0.dot(h)).unwrap_or_else(Quat::identity))
}

/// Handle displacement between two samples.
#[inline]
pub fn translation_delta<T: Scalar>(handle_prev: Vec3<T>, handle_now: Vec3<T>) -> Vec3<T> {
    handle_now - handle_prev
}

// Negated comparison so a NaN distance counts as degenerate.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn pivot_offset<T: Scalar>(p: Vec3<T>, pivot: Vec3<T>) -> Result<Vec3<T>, GeometryError> {
    let off = p - pivot;
    let d = off.norm();
    if !(d > T::lit(PIVOT_EPSILON)) {
        return Err(GeometryError::DegeneratePivot { distance: d.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(off)
}

/// Rotation about `pivot` induced by the grabbed point's change of direction.
pub fn rotation_delta<T: Scalar>(
    grabbed_prev: Vec3<T>,
    grabbed_now: Vec3<T>,
    pivot: Vec3<T>,
) -> Result<Quat<T>, GeometryError> {
    let a = pivot_offset(grabbed_prev, pivot)?;
    let b = pivot_offset(grabbed_now, pivot)?;
    minimal_arc_rotation(a / a.norm(), b / b.norm())
}

/// Ratio of the grabbed point's current to previous pivot distance,
/// clamped to `[MIN_SCALE, MAX_SCALE]`.
pub fn scale_delta<T: Scalar>(
    grabbed_prev: Vec3<T>,
    grabbed_now: Vec3<T>,
    pivot: Vec3<T>,
) -> Result<T, GeometryError> {
    let prev = pivot_offset(grabbed_prev, pivot)?.norm();
    let now = (grabbed_now - pivot).norm();
    Ok(clamp_scale(now / prev))
}

pub fn clamp_scale<T: Scalar>(s: T) -> T {
    s.max(T::lit(MIN_SCALE)).min(T::lit(MAX_SCALE))
}

/// Tait–Bryan angles of a rotation, intrinsic yaw (z), pitch (y), roll (x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerDecomposition<T> {
    /// `x` = roll, `y` = pitch, `z` = yaw, radians in `(-π, π]`.
    pub angles: Vec3<T>,
    /// Pitch lies within `GIMBAL_MARGIN` of ±π/2; roll and yaw are poorly separated.
    pub near_gimbal: bool,
}

fn wrap_angle<T: Scalar>(a: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    let mut a = a;
    while a > pi {
        a = a - two_pi;
    }
    while a <= -pi {
        a = a + two_pi;
    }
    a
}

/// Decomposes `q` as `Rz(yaw) · Ry(pitch) · Rx(roll)`.
///
/// At exact gimbal lock (`|sin pitch| = 1`) roll is pinned to zero and the
/// whole remaining rotation is reported as yaw.
pub fn euler_decompose<T: Scalar>(q: Quat<T>) -> EulerDecomposition<T> {
    let Quat { x, y, z, w } = q;
    let one = T::one();
    let two = T::two();
    let sin_pitch = (two * (w * y - z * x)).max(-one).min(one);
    let half_pi = T::FRAC_PI_2();

    let (roll, pitch, yaw) = if sin_pitch.abs() >= one - T::epsilon() * T::lit(4.0) {
        (T::zero(), half_pi.copysign(sin_pitch), two * z.atan2(w))
    } else {
        let roll = (two * (w * x + y * z)).atan2(one - two * (x * x + y * y));
        let yaw = (two * (w * z + x * y)).atan2(one - two * (y * y + z * z));
        // atan2 form keeps precision close to ±π/2 where asin does not.
        let cos_pitch = ((one - sin_pitch) * (one + sin_pitch)).sqrt();
        (roll, sin_pitch.atan2(cos_pitch), yaw)
    };
    let near_gimbal = (half_pi - pitch.abs()) < T::lit(GIMBAL_MARGIN);
    EulerDecomposition {
        angles: Vec3::new(wrap_angle(roll), pitch, wrap_angle(yaw)),
        near_gimbal,
    }
}

/// Inverse of [`euler_decompose`]: `Rz(e.z) · Ry(e.y) · Rx(e.x)`.
pub fn euler_compose<T: Scalar>(e: Vec3<T>) -> Quat<T> {
    let (sr, cr) = (e.x * T::half()).sin_cos();
    let (sp, cp) = (e.y * T::half()).sin_cos();
    let (sy, cy) = (e.z * T::half()).sin_cos();
    Quat::from_xyzw(
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
        cr * cp * cy + sr * sp * sy,
    )
    .unwrap_or_else(Quat::identity)
}

/// One grab's per-tick input decomposed into translation, rotation and
/// uniform scale about the group pivot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformDelta<T> {
    pub translation: Vec3<T>,
    pub rotation: Quat<T>,
    /// Roll, pitch, yaw of `rotation`.
    pub euler: Vec3<T>,
    pub scale: T,
}

impl<T: Scalar> Default for TransformDelta<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Scalar> TransformDelta<T> {
    pub fn identity() -> Self {
        Self { translation: Vec3::zero(), rotation: Quat::identity(), euler: Vec3::zero(), scale: T::one() }
    }

    pub fn new(translation: Vec3<T>, rotation: Quat<T>, scale: T) -> Result<Self, GeometryError> {
        if !(scale > T::zero() && scale.is_finite()) {
            return Err(GeometryError::InvalidScale(scale.to_f64().unwrap_or(f64::NAN)));
        }
        if !translation.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let rotation = Quat::from_xyzw(rotation.x, rotation.y, rotation.z, rotation.w)
            .ok_or(GeometryError::NonFinite)?;
        let euler = if rotation.is_identity() { Vec3::zero() } else { euler_decompose(rotation).angles };
        Ok(Self { translation, rotation, euler, scale })
    }

    pub fn translation(t: Vec3<T>) -> Self {
        Self { translation: t, ..Self::identity() }
    }

    pub fn rotation(q: Quat<T>) -> Self {
        Self { rotation: q, euler: euler_decompose(q).angles, ..Self::identity() }
    }

    pub fn scaling(s: T) -> Result<Self, GeometryError> {
        Self::new(Vec3::zero(), Quat::identity(), s)
    }

    pub fn is_identity(&self) -> bool {
        self.translation == Vec3::zero() && self.rotation.is_identity() && self.scale == T::one()
    }

    /// Image of a single point: `pivot + scale · rotation(p − pivot) + translation`.
    ///
    /// Pure translations skip the pivot round trip so every point receives
    /// exactly the same offset.
    #[inline]
    pub fn apply_point(&self, p: Vec3<T>, pivot: Vec3<T>) -> Vec3<T> {
        if self.rotation.is_identity() && self.scale == T::one() {
            return p + self.translation;
        }
        pivot + self.rotation.rotate(p - pivot) * self.scale + self.translation
    }
}

/// Applies `delta` about `pivot` to every position.
pub fn apply_delta<T: Scalar>(
    positions: &Positions<T>,
    pivot: Vec3<T>,
    delta: &TransformDelta<T>,
) -> Positions<T> {
    positions.iter().map(|(&id, &p)| (id, delta.apply_point(p, pivot))).collect()
}

/// Puts the grabbed vertex back on the scaled locus `pivot + scale · (start − pivot)`
/// after a scale grab, leaving the rest of the group untouched.
pub fn snap_back<T: Scalar>(
    group: &Positions<T>,
    grabbed: VertexId,
    grab_start: Vec3<T>,
    pivot: Vec3<T>,
    scale: T,
) -> Positions<T> {
    let mut out = group.clone();
    if let Some(p) = out.get_mut(&grabbed) {
        *p = pivot + (grab_start - pivot) * scale;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    type V = Vec3<f64>;

    fn v(x: f64, y: f64, z: f64) -> V {
        V::new(x, y, z)
    }

    fn close(a: V, b: V, tol: f64) -> bool {
        (a - b).max_abs() <= tol
    }

    #[test]
    fn centroid_examples() {
        let cube: Vec<V> = (0..8)
            .map(|i| v((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        assert_eq!(centroid(&cube).unwrap(), v(0.5, 0.5, 0.5));
        assert_eq!(centroid(&[v(0.2, 0.3, 0.4)]).unwrap(), v(0.2, 0.3, 0.4));
        assert_eq!(centroid(&[v(0.0, 0.0, 0.0), v(2.0, 0.0, 0.0)]).unwrap(), v(1.0, 0.0, 0.0));
        assert_eq!(centroid::<f64>(&[]), Err(GeometryError::EmptySet));
    }

    #[test]
    fn minimal_arc_examples() {
        let q = minimal_arc_rotation(V::unit_x(), V::unit_y()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(q.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.z, h, epsilon = 1e-12);
        assert_abs_diff_eq!(q.w, h, epsilon = 1e-12);

        assert_eq!(minimal_arc_rotation(V::unit_x(), V::unit_x()).unwrap(), Quat::identity());

        let q = minimal_arc_rotation(V::unit_x(), -V::unit_x()).unwrap();
        assert_eq!((q.x, q.y, q.z, q.w), (0.0, 0.0, 1.0, 0.0));
        assert!(close(q.rotate(V::unit_x()), -V::unit_x(), 1e-12));
    }

    #[test]
    fn antipodal_uses_x_reference_off_axis() {
        let d0 = v(0.0, 1.0, 0.0);
        let q = minimal_arc_rotation(d0, -d0).unwrap();
        // d0 × x̂ = (0,0,-1)
        assert_abs_diff_eq!(q.z, -1.0, epsilon = 1e-15);
        assert!(close(q.rotate(d0), -d0, 1e-12));
    }

    #[test]
    fn minimal_arc_rejects_non_unit() {
        assert!(matches!(
            minimal_arc_rotation(v(2.0, 0.0, 0.0), V::unit_y()),
            Err(GeometryError::NotUnit { .. })
        ));
        assert!(matches!(
            minimal_arc_rotation(V::unit_x(), v(0.0, 0.0, 0.0)),
            Err(GeometryError::NotUnit { .. })
        ));
    }

    #[test]
    fn translation_examples() {
        assert_eq!(translation_delta(V::zero(), v(0.4, 0.2, 0.1)), v(0.4, 0.2, 0.1));
        assert_eq!(translation_delta(v(1.0, 1.0, 1.0), v(1.0, 1.0, 1.0)), V::zero());
        let d = translation_delta(v(1.0, 1.0, 1.0), v(0.8, 1.1, 1.0));
        assert!(close(d, v(-0.2, 0.1, 0.0), 1e-15));
    }

    #[test]
    fn rotation_delta_examples() {
        let q = rotation_delta(V::unit_x(), V::unit_y(), V::zero()).unwrap();
        assert!(q.approx_same_rotation(Quat::from_axis_angle(V::unit_z(), std::f64::consts::FRAC_PI_2).unwrap(), 1e-12));
        assert_eq!(rotation_delta(v(1.0, 2.0, 3.0), v(1.0, 2.0, 3.0), V::zero()).unwrap(), Quat::identity());

        // Hand-rotated cube: 90° about +z through (0.5, 0.5, 0.5) maps
        // (x, y, z) to (1 - y, x, z).
        let pivot = v(0.5, 0.5, 0.5);
        let q = rotation_delta(v(1.5, 0.5, 0.5), v(0.5, 1.5, 0.5), pivot).unwrap();
        let delta = TransformDelta::rotation(q);
        for i in 0..8 {
            let p = v((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64);
            let expected = v(1.0 - p.y, p.x, p.z);
            assert!(close(delta.apply_point(p, pivot), expected, 1e-12), "corner {i}");
        }
    }

    #[test]
    fn rotation_delta_degenerate_pivot() {
        let err = rotation_delta(v(0.5, 0.5, 0.5), V::unit_x(), v(0.5, 0.5, 0.50005)).unwrap_err();
        assert!(matches!(err, GeometryError::DegeneratePivot { .. }));
        let err = rotation_delta(V::unit_x(), V::zero(), V::zero()).unwrap_err();
        assert!(matches!(err, GeometryError::DegeneratePivot { .. }));
    }

    #[test]
    fn scale_delta_examples() {
        assert_eq!(scale_delta(V::unit_x(), v(2.0, 0.0, 0.0), V::zero()).unwrap(), 2.0);
        assert_eq!(scale_delta(v(0.3, 0.4, 0.0), v(0.3, 0.4, 0.0), V::zero()).unwrap(), 1.0);
        assert_eq!(scale_delta(v(2.0, 0.0, 0.0), V::unit_x(), V::zero()).unwrap(), 0.5);
        assert_eq!(scale_delta(V::unit_x(), V::zero(), V::zero()).unwrap(), MIN_SCALE);
        assert_eq!(scale_delta(v(1e-3, 0.0, 0.0), v(1.0, 0.0, 0.0), V::zero()).unwrap(), MAX_SCALE);
        assert!(scale_delta(V::zero(), V::unit_x(), V::zero()).is_err());
    }

    #[test]
    fn apply_delta_examples() {
        let pts: Positions<f64> =
            [(VertexId(0), v(0.0, 0.0, 0.0)), (VertexId(1), v(1.0, 0.0, 0.0))].into_iter().collect();
        assert_eq!(apply_delta(&pts, v(0.3, 0.3, 0.3), &TransformDelta::identity()), pts);

        let moved = apply_delta(&pts, V::zero(), &TransformDelta::translation(v(0.4, 0.2, 0.1)));
        assert_eq!(moved[&VertexId(0)], v(0.4, 0.2, 0.1));
        assert_eq!(moved[&VertexId(1)], v(1.4, 0.2, 0.1));

        let pivot = v(0.5, 0.0, 0.0);
        let scaled = apply_delta(&pts, pivot, &TransformDelta::scaling(2.0).unwrap());
        assert_eq!(scaled[&VertexId(0)], v(-0.5, 0.0, 0.0));
        assert_eq!(scaled[&VertexId(1)], v(1.5, 0.0, 0.0));
        assert_eq!(TransformDelta::scaling(2.0).unwrap().apply_point(pivot, pivot), pivot);
    }

    #[test]
    fn transform_delta_rejects_bad_scale() {
        assert!(TransformDelta::<f64>::scaling(0.0).is_err());
        assert!(TransformDelta::<f64>::scaling(-1.0).is_err());
        assert!(TransformDelta::<f64>::scaling(f64::NAN).is_err());
    }

    #[test]
    fn euler_examples() {
        let d = euler_decompose(Quat::<f64>::identity());
        assert_eq!(d.angles, V::zero());
        assert!(!d.near_gimbal);

        let q = Quat::from_axis_angle(V::unit_z(), std::f64::consts::FRAC_PI_2).unwrap();
        let d = euler_decompose(q);
        assert_abs_diff_eq!(d.angles.z, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(d.angles.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.angles.y, 0.0, epsilon = 1e-12);

        // Half turn about x: roll = π, never -π.
        let q = Quat::from_axis_angle(V::unit_x(), std::f64::consts::PI).unwrap();
        let d = euler_decompose(q);
        assert!(d.angles.x > 0.0);
        assert!(euler_compose(d.angles).approx_same_rotation(q, 1e-12));
    }

    #[test]
    fn euler_gimbal_is_flagged_and_still_composes() {
        let q = Quat::from_axis_angle(V::unit_y(), std::f64::consts::FRAC_PI_2).unwrap();
        let d = euler_decompose(q);
        assert!(d.near_gimbal);
        assert_eq!(d.angles.x, 0.0);
        assert!(euler_compose(d.angles).approx_same_rotation(q, 1e-9));

        let twisted = Quat::from_axis_angle(V::unit_z(), 0.7).unwrap() * q;
        let d = euler_decompose(twisted);
        assert!(d.near_gimbal);
        assert!(euler_compose(d.angles).approx_same_rotation(twisted, 1e-7));
    }

    #[test]
    fn snap_back_examples() {
        let pivot = v(0.5, 0.5, 0.5);
        let start = v(1.0, 1.0, 0.5);
        let mut group: Positions<f64> = BTreeMap::new();
        group.insert(VertexId(3), v(2.0, 0.1, 0.9)); // dragged off the locus
        group.insert(VertexId(4), v(0.0, 0.0, 0.5));
        let out = snap_back(&group, VertexId(3), start, pivot, 1.5);
        assert_eq!(out[&VertexId(3)], pivot + (start - pivot) * 1.5);
        assert_eq!(out[&VertexId(4)], group[&VertexId(4)]);

        let out = snap_back(&group, VertexId(3), start, pivot, 1.0);
        assert_eq!(out[&VertexId(3)], start);
    }

    #[test]
    fn snap_back_keeps_scaled_face_planar() {
        // Tilted quad; scale 1.5 about its centroid with the grabbed corner
        // dragged off the locus before release.
        let face = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.3), v(1.0, 1.0, 0.6), v(0.0, 1.0, 0.3)];
        let pivot = centroid(&face).unwrap();
        let scale = TransformDelta::scaling(1.5).unwrap();
        let mut group: Positions<f64> = face
            .iter()
            .enumerate()
            .map(|(i, &p)| (VertexId(i as u32), scale.apply_point(p, pivot)))
            .collect();
        group.insert(VertexId(2), v(1.9, 1.7, 1.4));
        let out = snap_back(&group, VertexId(2), face[2], pivot, 1.5);

        // Residual of the fourth corner against the plane through the first three.
        let p: Vec<V> = out.values().copied().collect();
        let n = (p[1] - p[0]).cross(p[3] - p[0]).try_normalize().unwrap();
        for q in &p {
            assert!((*q - p[0]).dot(n).abs() < 1e-9);
        }
    }
}
