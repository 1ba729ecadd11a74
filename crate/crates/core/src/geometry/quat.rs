use std::ops::Mul;

use crate::scalar::Scalar;

use super::Vec3;

/// Rotation quaternion, vector part `(x, y, z)` and scalar part `w`.
///
/// Every constructor and product renormalizes, so the norm stays within a
/// few ulps of one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub w: T,
}

impl<T: Scalar> Default for Quat<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Scalar> Quat<T> {
    #[inline]
    pub fn identity() -> Self {
        Self { x: T::zero(), y: T::zero(), z: T::zero(), w: T::one() }
    }

    /// Builds from raw components and normalizes. Returns `None` for a
    /// zero or non-finite input.
    pub fn from_xyzw(x: T, y: T, z: T, w: T) -> Option<Self> {
        let q = Self { x, y, z, w };
        let n = q.norm();
        if n > T::zero() && n.is_finite() {
            Some(Self { x: x / n, y: y / n, z: z / n, w: w / n })
        } else {
            None
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Option<Self> {
        let a = axis.try_normalize()?;
        let (s, c) = (angle * T::half()).sin_cos();
        Self::from_xyzw(a.x * s, a.y * s, a.z * s, c)
    }

    #[inline]
    pub fn vector(self) -> Vec3<T> {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn norm(self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    #[inline]
    pub fn conjugate(self) -> Self {
        Self { x: -self.x, y: -self.y, z: -self.z, w: self.w }
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z + self.w * o.w
    }

    pub fn is_identity(self) -> bool {
        self.x == T::zero() && self.y == T::zero() && self.z == T::zero() && self.w == T::one()
    }

    /// Rotates `v`: `v + 2w(u×v) + 2u×(u×v)`.
    #[inline]
    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        let u = self.vector();
        let t = u.cross(v) * T::two();
        v + t * self.w + u.cross(t)
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(self) -> T {
        T::two() * self.vector().norm().atan2(self.w.abs())
    }

    /// True when `self` and `o` describe the same rotation within `tol`
    /// (either sign of the double cover).
    pub fn approx_same_rotation(self, o: Self, tol: T) -> bool {
        let d = |a: Self, b: Self| {
            (a.x - b.x).abs().max((a.y - b.y).abs()).max((a.z - b.z).abs()).max((a.w - b.w).abs())
        };
        let neg = Self { x: -o.x, y: -o.y, z: -o.z, w: -o.w };
        d(self, o) <= tol || d(self, neg) <= tol
    }
}

impl<T: Scalar> Mul for Quat<T> {
    type Output = Self;

    /// Hamilton product; `(a * b).rotate(v) == a.rotate(b.rotate(v))`.
    fn mul(self, b: Self) -> Self {
        let a = self;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        Self::from_xyzw(x, y, z, w).unwrap_or_else(Self::identity)
    }
}
