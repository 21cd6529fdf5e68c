//! Small fixed-size vector type and the obstacle primitives built on it.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// 3-vector. Serializes as `[x, y, z]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]")]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de> + Copy"))]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T> From<[T; 3]> for Vec3<T> {
    fn from([x, y, z]: [T; 3]) -> Self {
        Self { x, y, z }
    }
}

impl<T> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        [v.x, v.y, v.z]
    }
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
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
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Unit vector, or `None` when the norm is below `eps`.
    pub fn normalized(self, eps: T) -> Option<Self> {
        let n = self.norm();
        (n > eps).then(|| self / n)
    }

    /// Horizontal (x, y) part with z zeroed.
    #[inline]
    pub fn horizontal(self) -> Self {
        Self::new(self.x, self.y, T::zero())
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn lerp(self, o: Self, u: T) -> Self {
        self + (o - self) * u
    }

    /// Scales down to `max_norm` if longer.
    pub fn clamp_norm(self, max_norm: T) -> Self {
        let n = self.norm();
        if n > max_norm && n > T::zero() {
            self * (max_norm / n)
        } else {
            self
        }
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

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de> + Copy"))]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Self {
        Self { min, max }
    }

    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max) * T::lit(0.5)
    }

    pub fn half_extents(&self) -> Vec3<T> {
        (self.max - self.min) * T::lit(0.5)
    }

    pub fn translated(&self, d: Vec3<T>) -> Self {
        Self::new(self.min + d, self.max + d)
    }

    /// Distance from `p` to the box surface; zero inside.
    pub fn distance(&self, p: Vec3<T>) -> T {
        let dx = (self.min.x - p.x).max(T::zero()).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(T::zero()).max(p.y - self.max.y);
        let dz = (self.min.z - p.z).max(T::zero()).max(p.z - self.max.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

/// Sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de> + Copy"))]
pub struct Sphere<T> {
    pub center: Vec3<T>,
    pub radius: T,
}

impl<T: Real> Sphere<T> {
    /// Distance from `p` to the sphere surface; zero inside.
    pub fn distance(&self, p: Vec3<T>) -> T {
        (p.distance(self.center) - self.radius).max(T::zero())
    }
}

/// Obstacle geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Serialize + Copy", deserialize = "T: Deserialize<'de> + Copy"))]
pub enum Shape<T> {
    Box(Aabb<T>),
    Sphere(Sphere<T>),
}

impl<T: Real> Shape<T> {
    pub fn distance(&self, p: Vec3<T>) -> T {
        match self {
            Shape::Box(b) => b.distance(p),
            Shape::Sphere(s) => s.distance(p),
        }
    }

    pub fn center(&self) -> Vec3<T> {
        match self {
            Shape::Box(b) => b.center(),
            Shape::Sphere(s) => s.center,
        }
    }

    pub fn translated(&self, d: Vec3<T>) -> Self {
        match self {
            Shape::Box(b) => Shape::Box(b.translated(d)),
            Shape::Sphere(s) => Shape::Sphere(Sphere {
                center: s.center + d,
                radius: s.radius,
            }),
        }
    }

    /// Largest horizontal distance from the center to the surface.
    pub fn horizontal_extent(&self) -> T {
        match self {
            Shape::Box(b) => {
                let h = b.half_extents();
                (h.x * h.x + h.y * h.y).sqrt()
            }
            Shape::Sphere(s) => s.radius,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_distance_outside_inside() {
        let b = Aabb::<f64>::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 2.0, 2.0));
        assert_eq!(b.distance(Vec3::new(1.0, 1.0, 1.0)), 0.0);
        assert_eq!(b.distance(Vec3::new(5.0, 1.0, 1.0)), 3.0);
        assert!((b.distance(Vec3::new(5.0, 6.0, 1.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_distance() {
        let s = Sphere {
            center: Vec3::new(0.0, 0.0, 13.0),
            radius: 1.0,
        };
        assert_eq!(s.distance(Vec3::new(0.0, 0.0, 10.0)), 2.0);
    }

    #[test]
    fn vec3_serde_as_array() {
        let v = Vec3::new(1.0, 2.0, 3.5);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, "[1.0,2.0,3.5]");
        let back: Vec3<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn cross_product_right_handed() {
        let x = Vec3::new(1.0f32, 0.0, 0.0);
        let y = Vec3::new(0.0f32, 1.0, 0.0);
        assert_eq!(x.cross(y), Vec3::new(0.0, 0.0, 1.0));
    }
}
