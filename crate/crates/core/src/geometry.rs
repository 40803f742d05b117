//! Small fixed-size vector algebra.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.z.to_f64_lossy()),
        )
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// A unit vector on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction<T>(Vec3<T>);

impl<T: Real> Direction<T> {
    /// Normalizes `v`. Returns `None` for a zero or non-finite vector.
    pub fn new(v: Vec3<T>) -> Option<Self> {
        let n = v.norm();
        if n > T::zero() && n.is_finite() {
            Some(Self(v * n.recip()))
        } else {
            None
        }
    }

    /// Wraps components already known to be unit length (to rounding).
    #[inline]
    pub fn new_unchecked(v: Vec3<T>) -> Self {
        Self(v)
    }

    /// The fiber axis, -e3.
    pub fn minus_e3() -> Self {
        Self(Vec3::new(T::zero(), T::zero(), -T::one()))
    }

    #[inline]
    pub fn vec(self) -> Vec3<T> {
        self.0
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.0.dot(o.0)
    }

    /// Re-projects onto the sphere to stop rounding drift.
    #[inline]
    pub fn renormalized(self) -> Self {
        Self(self.0 * self.0.norm().recip())
    }
}

/// Row-major 3x3 matrix, used for rotations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T> {
    pub rows: [Vec3<T>; 3],
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            rows: [Vec3::new(o, z, z), Vec3::new(z, o, z), Vec3::new(z, z, o)],
        }
    }

    #[inline]
    pub fn apply(&self, v: Vec3<T>) -> Vec3<T> {
        Vec3::new(self.rows[0].dot(v), self.rows[1].dot(v), self.rows[2].dot(v))
    }

    /// Rotation by `angle` about the unit `axis` (Rodrigues).
    pub fn axis_angle(axis: Direction<T>, angle: T) -> Self {
        let a = axis.vec();
        let (s, c) = angle.sin_cos();
        let t = T::one() - c;
        Self {
            rows: [
                Vec3::new(t * a.x * a.x + c, t * a.x * a.y - s * a.z, t * a.x * a.z + s * a.y),
                Vec3::new(t * a.x * a.y + s * a.z, t * a.y * a.y + c, t * a.y * a.z - s * a.x),
                Vec3::new(t * a.x * a.z - s * a.y, t * a.y * a.z + s * a.x, t * a.z * a.z + c),
            ],
        }
    }

    /// Minimal-angle rotation carrying `from` onto `to`.
    ///
    /// Antiparallel inputs (dot < -1 + 1e-12) rotate by pi about the unit
    /// vector orthogonal to `from` obtained from the coordinate axis least
    /// aligned with it.
    pub fn rotation_between(from: Direction<T>, to: Direction<T>) -> Self {
        let (a, b) = (from.vec(), to.vec());
        let c = a.dot(b);
        if c < -T::one() + T::lit(1e-12) {
            let ax = a.x.abs();
            let ay = a.y.abs();
            let az = a.z.abs();
            let e = if ax <= ay && ax <= az {
                Vec3::new(T::one(), T::zero(), T::zero())
            } else if ay <= az {
                Vec3::new(T::zero(), T::one(), T::zero())
            } else {
                Vec3::new(T::zero(), T::zero(), T::one())
            };
            let axis = Direction::new(a.cross(e)).expect("non-degenerate orthogonal axis");
            return Self::axis_angle(axis, T::PI());
        }
        let v = a.cross(b);
        let k = T::one() / (T::one() + c);
        Self {
            rows: [
                Vec3::new(c + k * v.x * v.x, k * v.x * v.y - v.z, k * v.x * v.z + v.y),
                Vec3::new(k * v.x * v.y + v.z, c + k * v.y * v.y, k * v.y * v.z - v.x),
                Vec3::new(k * v.x * v.z - v.y, k * v.y * v.z + v.x, c + k * v.z * v.z),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir(x: f64, y: f64, z: f64) -> Direction<f64> {
        Direction::new(Vec3::new(x, y, z)).unwrap()
    }

    #[test]
    fn rotation_between_maps_from_onto_to() {
        let cases = [
            (dir(0.0, 0.0, -1.0), dir(1.0, 0.0, 0.0)),
            (dir(0.3, -0.2, 0.9), dir(-0.5, 0.4, 0.1)),
            (dir(0.0, 0.0, 1.0), dir(0.0, 0.0, -1.0)),
            (dir(1.0, 2.0, 3.0), dir(-1.0, -2.0, -3.0)),
        ];
        for (a, b) in cases {
            let r = Mat3::rotation_between(a, b);
            let img = r.apply(a.vec());
            assert!((img - b.vec()).norm() < 1e-12, "{a:?} -> {b:?} gave {img:?}");
            // orthogonality
            for i in 0..3 {
                for j in 0..3 {
                    let d = r.rows[i].dot(r.rows[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_rotation_for_equal_directions() {
        let a = dir(0.1, 0.2, -0.9);
        let r = Mat3::rotation_between(a, a);
        let v = Vec3::new(0.3, -4.0, 2.5);
        assert!((r.apply(v) - v).norm() < 1e-14);
    }

    #[test]
    fn zero_vector_is_not_a_direction() {
        assert!(Direction::new(Vec3::<f64>::zero()).is_none());
        assert!(Direction::new(Vec3::new(f64::NAN, 0.0, 1.0)).is_none());
    }
}
