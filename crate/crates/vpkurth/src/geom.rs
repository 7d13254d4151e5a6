//! Minimal 3-vector arithmetic and phase-space points.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    #[must_use]
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[must_use]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[must_use]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    #[must_use]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[must_use]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[must_use]
    pub fn scale(self, s: f64) -> Vec3 {
        Vec3 { x: s * self.x, y: s * self.y, z: s * self.z }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

/// A point (x, v) of position-velocity phase space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec3,
    pub v: Vec3,
}

impl PhasePoint {
    #[must_use]
    pub fn new(x: Vec3, v: Vec3) -> Self {
        PhasePoint { x, v }
    }

    /// |x ^ v|^2, the squared angular momentum of the point.
    #[must_use]
    pub fn ell_squared(&self) -> f64 {
        self.x.cross(self.v).norm_squared()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite()
    }
}

/// Rotation matrix stored row-major.
#[derive(Clone, Copy, Debug)]
pub struct Rotation {
    pub m: [[f64; 3]; 3],
}

impl Rotation {
    /// Z-Y-Z Euler angles: R = Rz(alpha) * Ry(beta) * Rz(delta).
    #[must_use]
    pub fn from_euler_zyz(alpha: f64, beta: f64, delta: f64) -> Self {
        let (sa, ca) = alpha.sin_cos();
        let (sb, cb) = beta.sin_cos();
        let (sd, cd) = delta.sin_cos();
        // Rz(a)*Ry(b)*Rz(d) assembled directly.
        Rotation {
            m: [
                [ca * cb * cd - sa * sd, -ca * cb * sd - sa * cd, ca * sb],
                [sa * cb * cd + ca * sd, -sa * cb * sd + ca * cd, sa * sb],
                [-sb * cd, sb * sd, cb],
            ],
        }
    }

    #[must_use]
    pub fn apply(&self, v: Vec3) -> Vec3 {
        let r = &self.m;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_product_orientation() {
        let e1 = Vec3::new(1.0, 0.0, 0.0);
        let e2 = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(e1.cross(e2), Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn rotation_is_orthogonal() {
        let r = Rotation::from_euler_zyz(0.3, 1.1, -2.0);
        let a = r.apply(Vec3::new(1.0, 2.0, 3.0));
        let b = r.apply(Vec3::new(-2.0, 0.5, 1.0));
        // Orthogonal maps preserve dot products and norms.
        let a0 = Vec3::new(1.0, 2.0, 3.0);
        let b0 = Vec3::new(-2.0, 0.5, 1.0);
        assert!((a.dot(b) - a0.dot(b0)).abs() < 1e-12);
        assert!((a.norm() - a0.norm()).abs() < 1e-12);
    }

    #[test]
    fn euler_identity_at_zero_angles() {
        let r = Rotation::from_euler_zyz(0.0, 0.0, 0.0);
        let v = Vec3::new(0.2, -0.4, 0.9);
        let w = r.apply(v);
        assert!((w - v).norm() < 1e-15);
    }

    #[test]
    fn ell_squared_matches_lagrange_identity() {
        // |x^v|^2 = |x|^2 |v|^2 - (x.v)^2
        let p = PhasePoint::new(Vec3::new(0.3, -0.2, 0.7), Vec3::new(-0.1, 0.8, 0.05));
        let lhs = p.ell_squared();
        let rhs = p.x.norm_squared() * p.v.norm_squared() - p.x.dot(p.v).powi(2);
        assert!((lhs - rhs).abs() < 1e-15);
    }
}
