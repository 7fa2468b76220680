//! Shared geometric primitives.

use nalgebra::{Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;
pub type Rotation = UnitQuaternion<f64>;

/// Absolute tolerance for geometric predicates, in domain units.
pub const GEOM_TOL: f64 = 1e-9;

/// Closed ball `B(center, radius)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, p: &Point) -> bool {
        (p - self.center).norm_squared() <= self.radius * self.radius
    }

    /// Concentric ball with radius scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Ball {
        Ball {
            center: self.center,
            radius: self.radius * factor,
        }
    }

    /// Distance from a point to the closed ball (0 inside).
    pub fn distance(&self, p: &Point) -> f64 {
        ((p - self.center).norm() - self.radius).max(0.0)
    }

    pub fn intersects(&self, other: &Ball) -> bool {
        (other.center - self.center).norm() <= self.radius + other.radius
    }
}

/// Half-line from `origin` in unit direction `dir`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Point,
    pub dir: Vector,
}

impl Ray {
    pub fn point_at(&self, t: f64) -> Point {
        self.origin + self.dir * t
    }

    /// Nearest point of the ray to `p`.
    pub fn project(&self, p: &Point) -> Point {
        let t = (p - self.origin).dot(&self.dir).max(0.0);
        self.point_at(t)
    }
}

/// Deterministic low-discrepancy covering of the rotation group, built from
/// a double-spiral on the unit quaternion sphere.
pub fn quaternion_spiral(n: usize) -> Vec<Rotation> {
    // Irrational winding constants of the double spiral.
    const PHI: f64 = std::f64::consts::SQRT_2;
    const PSI: f64 = 1.533_751_168_755_204_3;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let s = i as f64 + 0.5;
        let t = s / n as f64;
        let d = 2.0 * std::f64::consts::PI * s;
        let r = t.sqrt();
        let rr = (1.0 - t).sqrt();
        let alpha = d / PHI;
        let beta = d / PSI;
        let q = nalgebra::Quaternion::new(
            rr * beta.cos(),
            r * alpha.sin(),
            r * alpha.cos(),
            rr * beta.sin(),
        );
        out.push(UnitQuaternion::from_quaternion(q));
    }
    out
}

/// The 24 proper rotations of the octahedral group, as signed permutation
/// matrices with determinant +1.
pub fn octahedral_rotations() -> Vec<Rotation> {
    let mut out = Vec::with_capacity(24);
    let perms: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for perm in perms {
        for signs in 0..8u8 {
            let s = [
                if signs & 1 == 0 { 1.0 } else { -1.0 },
                if signs & 2 == 0 { 1.0 } else { -1.0 },
                if signs & 4 == 0 { 1.0 } else { -1.0 },
            ];
            let mut m = nalgebra::Matrix3::<f64>::zeros();
            for (row, &col) in perm.iter().enumerate() {
                m[(row, col)] = s[row];
            }
            if (m.determinant() - 1.0).abs() < 1e-12 {
                let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
                out.push(UnitQuaternion::from_rotation_matrix(&rot));
            }
        }
    }
    debug_assert_eq!(out.len(), 24);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_rejects_bad_radius() {
        assert!(Ball::new(Point::origin(), 0.0).is_err());
        assert!(Ball::new(Point::origin(), -1.0).is_err());
        assert!(Ball::new(Point::origin(), f64::NAN).is_err());
    }

    #[test]
    fn ball_distance_and_containment() {
        let b = Ball::new(Point::new(1.0, 0.0, 0.0), 2.0).unwrap();
        assert!(b.contains(&Point::new(2.0, 1.0, 0.0)));
        assert_eq!(b.distance(&Point::new(4.0, 0.0, 0.0)), 1.0);
        assert_eq!(b.distance(&Point::new(1.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn octahedral_group_has_24_proper_rotations() {
        let rots = octahedral_rotations();
        assert_eq!(rots.len(), 24);
        // Closed under composition up to tolerance: spot-check a few products.
        for a in rots.iter().take(6) {
            for b in rots.iter().take(6) {
                let c = a * b;
                let found = rots
                    .iter()
                    .any(|r| r.angle_to(&c) < 1e-9);
                assert!(found);
            }
        }
    }

    #[test]
    fn quaternion_spiral_is_normalized_and_spread() {
        let qs = quaternion_spiral(64);
        assert_eq!(qs.len(), 64);
        // No two rotations closer than a degenerate threshold.
        for (i, a) in qs.iter().enumerate() {
            for b in qs.iter().skip(i + 1) {
                assert!(a.angle_to(b) > 1e-4);
            }
        }
    }
}
