//! Exact geometry of the three area-minimizing cones in `R^3`.
//!
//! The canonical models live at the origin: the plane `{x3 = 0}`, the
//! triple junction `Y0 = Prop x R` whose three half-planes meet at 120
//! degrees along the `x3`-axis, and `T0`, the cone over the six edges of
//! the regular tetrahedron with vertices
//! `A1 = (1,0,0)`, `A2 = (-1/3, 2*sqrt(2)/3, 0)`,
//! `A3 = (-1/3, -sqrt(2)/3, sqrt(6)/3)`, `A4 = (-1/3, -sqrt(2)/3, -sqrt(6)/3)`.
//! A general cone is a rotation plus translation of its canonical model.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::{Ball, Point, Ray, Rotation, Vector, GEOM_TOL};
use crate::sets::DiscreteSet;

/// Area density of the tetrahedral cone in the unit ball: six planar
/// sectors, each the cone over a great-circle arc of length `acos(-1/3)`,
/// so `3 * acos(-1/3)`. Frozen from the quadrature oracle; the unit tests
/// re-derive it.
pub const D_PLUS: f64 = 5.731_899_708_747_056;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConeKind {
    /// A plane (type 1).
    P,
    /// Three half-planes meeting at 120 degrees along a line (type 2).
    Y,
    /// Cone over the edge skeleton of a regular tetrahedron (type 3).
    T,
}

impl ConeKind {
    /// Density `H^2(Z cap B(apex, 1))` of the canonical cone.
    pub fn density(self) -> f64 {
        match self {
            ConeKind::P => std::f64::consts::PI,
            ConeKind::Y => 1.5 * std::f64::consts::PI,
            ConeKind::T => D_PLUS,
        }
    }

    /// Type index: 1, 2 or 3.
    pub fn type_index(self) -> usize {
        match self {
            ConeKind::P => 1,
            ConeKind::Y => 2,
            ConeKind::T => 3,
        }
    }

    /// Number of connected components of the complement near the apex
    /// (`type + 1`).
    pub fn region_count(self) -> usize {
        self.type_index() + 1
    }

    pub const ALL: [ConeKind; 3] = [ConeKind::P, ConeKind::Y, ConeKind::T];
}

impl std::fmt::Display for ConeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConeKind::P => "P",
            ConeKind::Y => "Y",
            ConeKind::T => "T",
        };
        f.write_str(s)
    }
}

/// Planar region of one cone face, in the face's 2D coordinates.
#[derive(Debug, Clone, Copy)]
enum FaceRegion {
    /// Entire plane (the P cone).
    Full,
    /// `a >= 0`, the face of a Y bounded by the spine line `a = 0`.
    HalfPlane,
    /// Sector between the rays at angles `0` and `theta` (`theta < pi`).
    Wedge { theta: f64 },
}

/// One planar face of a canonical cone: orthonormal in-plane basis
/// `(e1, e2)`, unit normal, and the admissible 2D region.
#[derive(Debug, Clone)]
struct Face {
    e1: Vector,
    e2: Vector,
    normal: Vector,
    region: FaceRegion,
}

impl Face {
    fn local(&self, q: &Vector) -> (f64, f64, f64) {
        (q.dot(&self.e1), q.dot(&self.e2), q.dot(&self.normal))
    }

    /// Nearest point of the region to `(a, b)` in face coordinates.
    fn project2d(&self, a: f64, b: f64) -> (f64, f64) {
        match self.region {
            FaceRegion::Full => (a, b),
            FaceRegion::HalfPlane => {
                if a >= 0.0 {
                    (a, b)
                } else {
                    (0.0, b)
                }
            }
            FaceRegion::Wedge { theta } => {
                let (st, ct) = (theta.sin(), theta.cos());
                if b >= 0.0 && a * st - b * ct >= 0.0 {
                    return (a, b);
                }
                let t1 = a.max(0.0);
                let p1 = (t1, 0.0);
                let t2 = (a * ct + b * st).max(0.0);
                let p2 = (t2 * ct, t2 * st);
                let d1 = (a - p1.0).powi(2) + (b - p1.1).powi(2);
                let d2 = (a - p2.0).powi(2) + (b - p2.1).powi(2);
                if d1 <= d2 {
                    p1
                } else {
                    p2
                }
            }
        }
    }

    /// Membership test for `(a, b)`, with a small tolerance so that points
    /// constructed on the face test positive.
    fn contains2d(&self, a: f64, b: f64, tol: f64) -> bool {
        match self.region {
            FaceRegion::Full => true,
            FaceRegion::HalfPlane => a >= -tol,
            FaceRegion::Wedge { theta } => {
                b >= -tol && a * theta.sin() - b * theta.cos() >= -tol
            }
        }
    }

    /// Linear constraints `n . (a, b) >= 0` defining the region.
    fn constraints(&self) -> Vec<[f64; 2]> {
        match self.region {
            FaceRegion::Full => vec![],
            FaceRegion::HalfPlane => vec![[1.0, 0.0]],
            FaceRegion::Wedge { theta } => {
                vec![[0.0, 1.0], [theta.sin(), -theta.cos()]]
            }
        }
    }
}

/// Tetrahedron vertices of the canonical T cone.
pub fn tetrahedron_vertices() -> [Vector; 4] {
    let s2 = 2.0_f64.sqrt();
    let s6 = 6.0_f64.sqrt();
    [
        Vector::new(1.0, 0.0, 0.0),
        Vector::new(-1.0 / 3.0, 2.0 * s2 / 3.0, 0.0),
        Vector::new(-1.0 / 3.0, -s2 / 3.0, s6 / 3.0),
        Vector::new(-1.0 / 3.0, -s2 / 3.0, -s6 / 3.0),
    ]
}

/// Directions of the three Y rays in the `(x1, x2)`-plane.
fn y_ray_dirs() -> [Vector; 3] {
    let c = 0.5;
    let s = 3.0_f64.sqrt() / 2.0;
    [
        Vector::new(1.0, 0.0, 0.0),
        Vector::new(-c, s, 0.0),
        Vector::new(-c, -s, 0.0),
    ]
}

fn canonical_faces(kind: ConeKind) -> &'static [Face] {
    static P_FACES: OnceLock<Vec<Face>> = OnceLock::new();
    static Y_FACES: OnceLock<Vec<Face>> = OnceLock::new();
    static T_FACES: OnceLock<Vec<Face>> = OnceLock::new();
    match kind {
        ConeKind::P => P_FACES.get_or_init(|| {
            vec![Face {
                e1: Vector::x(),
                e2: Vector::y(),
                normal: Vector::z(),
                region: FaceRegion::Full,
            }]
        }),
        ConeKind::Y => Y_FACES.get_or_init(|| {
            y_ray_dirs()
                .iter()
                .map(|d| Face {
                    e1: *d,
                    e2: Vector::z(),
                    normal: d.cross(&Vector::z()),
                    region: FaceRegion::HalfPlane,
                })
                .collect()
        }),
        ConeKind::T => T_FACES.get_or_init(|| {
            let a = tetrahedron_vertices();
            let theta = (-1.0_f64 / 3.0).acos();
            let mut faces = Vec::with_capacity(6);
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let e1 = a[i];
                    let e2 = (a[j] - a[j].dot(&e1) * e1).normalize();
                    faces.push(Face {
                        e1,
                        e2,
                        normal: e1.cross(&e2),
                        region: FaceRegion::Wedge { theta },
                    });
                }
            }
            faces
        }),
    }
}

/// Rays of the singular line(s) of a cone: one line (two opposite rays)
/// for Y, four rays for T, empty for P.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spine {
    pub rays: Vec<Ray>,
}

/// A minimal cone: canonical model of `kind`, rotated by `orientation`
/// and translated to `apex`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalCone {
    kind: ConeKind,
    apex: Point,
    orientation: Rotation,
}

impl MinimalCone {
    pub fn new(kind: ConeKind, apex: Point, orientation: Rotation) -> Self {
        Self {
            kind,
            apex,
            orientation,
        }
    }

    /// Canonical cone of the given kind, apex at the origin.
    pub fn canonical(kind: ConeKind) -> Self {
        Self::new(kind, Point::origin(), Rotation::identity())
    }

    /// Plane through `apex` with unit normal `normal`.
    pub fn plane(apex: Point, normal: &Vector) -> Self {
        let n = normal.normalize();
        let orientation = Rotation::rotation_between(&Vector::z(), &n)
            .unwrap_or_else(|| Rotation::from_axis_angle(&Vector::x_axis(), std::f64::consts::PI));
        Self::new(ConeKind::P, apex, orientation)
    }

    pub fn kind(&self) -> ConeKind {
        self.kind
    }

    pub fn apex(&self) -> Point {
        self.apex
    }

    pub fn orientation(&self) -> Rotation {
        self.orientation
    }

    fn to_local(&self, p: &Point) -> Vector {
        self.orientation.inverse_transform_vector(&(p - self.apex))
    }

    fn to_world(&self, q: &Vector) -> Point {
        self.apex + self.orientation.transform_vector(q)
    }

    /// Euclidean distance from `p` to the cone set, computed face by face
    /// in closed form.
    pub fn distance(&self, p: &Point) -> f64 {
        self.nearest_with_distance(p).1
    }

    /// Nearest point of the cone set to `p`.
    pub fn nearest(&self, p: &Point) -> Point {
        self.nearest_with_distance(p).0
    }

    pub fn nearest_with_distance(&self, p: &Point) -> (Point, f64) {
        let q = self.to_local(p);
        let mut best_d2 = f64::INFINITY;
        let mut best = Vector::zeros();
        for face in canonical_faces(self.kind) {
            let (a, b, n) = face.local(&q);
            let (pa, pb) = face.project2d(a, b);
            let d2 = (a - pa).powi(2) + (b - pb).powi(2) + n * n;
            if d2 < best_d2 {
                best_d2 = d2;
                best = pa * face.e1 + pb * face.e2;
            }
        }
        (self.to_world(&best), best_d2.sqrt())
    }

    /// Index of the complement region containing `p` (0-based, one of
    /// `kind.region_count()` sectors). Points on the cone get the label of
    /// an adjacent sector.
    pub fn sector_label(&self, p: &Point) -> usize {
        let q = self.to_local(p);
        match self.kind {
            ConeKind::P => {
                if q.z >= 0.0 {
                    0
                } else {
                    1
                }
            }
            ConeKind::Y => {
                let phi = q.y.atan2(q.x);
                let two_pi = 2.0 * std::f64::consts::PI;
                let phin = if phi < 0.0 { phi + two_pi } else { phi };
                ((phin / (two_pi / 3.0)).floor() as usize).min(2)
            }
            ConeKind::T => {
                let n = q.norm();
                if n == 0.0 {
                    return 0;
                }
                let u = q / n;
                let verts = tetrahedron_vertices();
                let mut best = 0;
                let mut best_dot = f64::INFINITY;
                for (l, v) in verts.iter().enumerate() {
                    let d = u.dot(v);
                    if d < best_dot {
                        best_dot = d;
                        best = l;
                    }
                }
                best
            }
        }
    }

    /// The spine rays in world coordinates.
    pub fn spine(&self) -> Spine {
        let rays = match self.kind {
            ConeKind::P => vec![],
            ConeKind::Y => {
                let axis = self.orientation.transform_vector(&Vector::z());
                vec![
                    Ray {
                        origin: self.apex,
                        dir: axis,
                    },
                    Ray {
                        origin: self.apex,
                        dir: -axis,
                    },
                ]
            }
            ConeKind::T => tetrahedron_vertices()
                .iter()
                .map(|v| Ray {
                    origin: self.apex,
                    dir: self.orientation.transform_vector(v),
                })
                .collect(),
        };
        Spine { rays }
    }

    /// `H^2(Z cap B)`: exact density formula for apex-centered balls,
    /// otherwise face-by-face quadrature (exact radial integral, composite
    /// Simpson in angle).
    pub fn ball_area(&self, ball: &Ball) -> f64 {
        let r = ball.radius;
        if (ball.center - self.apex).norm() <= 1e-12 * r {
            return self.kind.density() * r * r;
        }
        let c = self.to_local(&ball.center);
        let mut total = 0.0;
        for face in canonical_faces(self.kind) {
            let (a0, b0, h) = face.local(&c);
            let rho2 = r * r - h * h;
            if rho2 <= 0.0 {
                continue;
            }
            let constraints = face.constraints();
            if constraints.is_empty() {
                total += std::f64::consts::PI * rho2;
                continue;
            }
            total += disk_region_area(a0, b0, rho2.sqrt(), &constraints);
        }
        total
    }

    /// Point sample of `Z cap B` with pitch at most `spacing` and per-point
    /// area weights summing to the intersection area. Empty when the ball
    /// misses the cone.
    pub fn sample(&self, ball: &Ball, spacing: f64) -> Result<DiscreteSet> {
        if !(spacing > 0.0 && spacing < ball.radius) {
            return Err(Error::InvalidParameter(format!(
                "sample spacing must satisfy 0 < spacing < radius, got {spacing}"
            )));
        }
        let r = ball.radius;
        let c = self.to_local(&ball.center);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        // 5x5 subgrid offsets for partial-cell occupancy.
        let offs: [f64; 5] = [-0.4, -0.2, 0.0, 0.2, 0.4];
        for face in canonical_faces(self.kind) {
            let (a0, b0, h) = face.local(&c);
            let rho2 = r * r - h * h;
            if rho2 <= 0.0 {
                continue;
            }
            let rho = rho2.sqrt();
            let p = spacing;
            let i_lo = ((a0 - rho) / p).floor() as i64;
            let i_hi = ((a0 + rho) / p).ceil() as i64;
            let j_lo = ((b0 - rho) / p).floor() as i64;
            let j_hi = ((b0 + rho) / p).ceil() as i64;
            for i in i_lo..=i_hi {
                for j in j_lo..=j_hi {
                    let ca = (i as f64 + 0.5) * p;
                    let cb = (j as f64 + 0.5) * p;
                    let mut count = 0u32;
                    let mut sa = 0.0;
                    let mut sb = 0.0;
                    for da in offs {
                        for db in offs {
                            let a = ca + da * p;
                            let b = cb + db * p;
                            let in_disk =
                                (a - a0).powi(2) + (b - b0).powi(2) <= rho2;
                            if in_disk && face.contains2d(a, b, 0.0) {
                                count += 1;
                                sa += a;
                                sb += b;
                            }
                        }
                    }
                    if count > 0 {
                        let inv = 1.0 / count as f64;
                        let q = (sa * inv) * face.e1 + (sb * inv) * face.e2;
                        points.push(self.to_world(&q));
                        weights.push(count as f64 / 25.0 * p * p);
                    }
                }
            }
        }
        Ok(DiscreteSet::new(points, weights, spacing))
    }

    /// Recentering: given `x` on the cone, finds `r1` in
    /// `{r0, V r0, V^2 r0}` and a cone `Z'` (possibly of lower kind) with
    /// apex in `B(x, r1/V)` whose set coincides with this cone inside
    /// `B(x, r1)`. Candidates are tried in kind order and verified by a
    /// sampled bilateral Hausdorff check at tolerance `1e-6 r1`.
    pub fn recenter(&self, x: &Point, r0: f64, v: f64) -> Result<(f64, MinimalCone)> {
        if self.distance(x) > GEOM_TOL * r0 {
            return Err(Error::Precondition(format!(
                "recenter: point is {:.3e} from the cone, tolerance {:.3e}",
                self.distance(x),
                GEOM_TOL * r0
            )));
        }
        if !(v >= 1.0) || !(r0 > 0.0) {
            return Err(Error::InvalidParameter(
                "recenter requires r0 > 0 and V >= 1".into(),
            ));
        }
        let candidates = self.recenter_candidates(x);
        for scale in [1.0, v, v * v] {
            let r1 = scale * r0;
            let ball = Ball {
                center: *x,
                radius: r1,
            };
            for cand in &candidates {
                let apex_ok = (cand.apex - x).norm() <= r1 / v + GEOM_TOL * r1;
                if apex_ok && sets_equal_in_ball(self, cand, &ball, 1e-6 * r1) {
                    return Ok((r1, cand.clone()));
                }
            }
        }
        Err(Error::Precondition(
            "recentering found no admissible cone".into(),
        ))
    }

    /// Candidate recentered cones around `x`, highest kind first.
    fn recenter_candidates(&self, x: &Point) -> Vec<MinimalCone> {
        let mut out = Vec::new();
        match self.kind {
            ConeKind::P => {
                out.push(MinimalCone::new(ConeKind::P, *x, self.orientation));
            }
            ConeKind::Y => {
                // Same cone, apex moved to the nearest spine point.
                let axis = self.orientation.transform_vector(&Vector::z());
                let t = (x - self.apex).dot(&axis);
                out.push(MinimalCone::new(
                    ConeKind::Y,
                    self.apex + t * axis,
                    self.orientation,
                ));
                if let Some(p) = self.face_plane_through(x) {
                    out.push(p);
                }
            }
            ConeKind::T => {
                out.push(self.clone());
                // Y cones along each spine ray, nearest first.
                let verts = tetrahedron_vertices();
                let mut ys: Vec<(f64, MinimalCone)> = Vec::new();
                for (i, vert) in verts.iter().enumerate() {
                    let dir = self.orientation.transform_vector(vert);
                    let t = (x - self.apex).dot(&dir).max(0.0);
                    let foot = self.apex + t * dir;
                    let d = (x - foot).norm();
                    ys.push((d, self.local_y_cone(i, foot)));
                }
                ys.sort_by(|a, b| a.0.total_cmp(&b.0));
                out.extend(ys.into_iter().map(|(_, c)| c));
                if let Some(p) = self.face_plane_through(x) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// The Y cone tangent to a T along spine ray `i`, re-apexed at `foot`.
    fn local_y_cone(&self, i: usize, foot: Point) -> MinimalCone {
        let verts = tetrahedron_vertices();
        let axis = verts[i];
        let j0 = (0..4).find(|&j| j != i).unwrap();
        let u = (verts[j0] - verts[j0].dot(&axis) * axis).normalize();
        let w = axis.cross(&u);
        let m = Matrix3::from_columns(&[u, w, axis]);
        let local = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
        MinimalCone::new(ConeKind::Y, foot, self.orientation * local)
    }

    /// Plane through `x` spanned by the face of the cone nearest to `x`;
    /// `None` if `x` is too close to the spine for the face to be unique.
    fn face_plane_through(&self, x: &Point) -> Option<MinimalCone> {
        let q = self.to_local(x);
        let mut best: Option<(f64, &Face)> = None;
        for face in canonical_faces(self.kind) {
            let (a, b, n) = face.local(&q);
            let (pa, pb) = face.project2d(a, b);
            let d2 = (a - pa).powi(2) + (b - pb).powi(2) + n * n;
            if best.map_or(true, |(bd, _)| d2 < bd) {
                best = Some((d2, face));
            }
        }
        let (_, face) = best?;
        let normal = self.orientation.transform_vector(&face.normal);
        Some(MinimalCone::plane(*x, &normal))
    }

    /// Same cone set with the apex slid to its canonical representative
    /// nearest `x`: planes re-apex at the projection of `x`, Y cones at
    /// the nearest spine point, T cones are rigid. Removes the gauge
    /// freedom of the degenerate apex directions.
    pub fn with_apex_near(&self, x: &Point) -> MinimalCone {
        match self.kind {
            ConeKind::P => {
                let foot = self.nearest(x);
                MinimalCone::new(ConeKind::P, foot, self.orientation)
            }
            ConeKind::Y => {
                let axis = self.orientation.transform_vector(&Vector::z());
                let t = (x - self.apex).dot(&axis);
                MinimalCone::new(ConeKind::Y, self.apex + t * axis, self.orientation)
            }
            ConeKind::T => self.clone(),
        }
    }

    /// Image of the cone under a rigid motion `p -> rot(p) + shift`.
    pub fn transformed(&self, rot: &Rotation, shift: &Vector) -> MinimalCone {
        MinimalCone::new(
            self.kind,
            Point::from(rot.transform_point(&self.apex).coords + shift),
            rot * self.orientation,
        )
    }
}

/// Area of `{|x - c| <= rho} cap {n_k . x >= 0 for all k}` in the plane:
/// exact radial integration along polar rays from the disk center,
/// composite Simpson in the angle.
fn disk_region_area(a0: f64, b0: f64, rho: f64, constraints: &[[f64; 2]]) -> f64 {
    const N: usize = 8192;
    let dphi = 2.0 * std::f64::consts::PI / N as f64;
    let radial = |phi: f64| -> f64 {
        let (e0, e1) = (phi.cos(), phi.sin());
        let mut lo = 0.0_f64;
        let mut hi = rho;
        for c in constraints {
            let base = c[0] * a0 + c[1] * b0;
            let slope = c[0] * e0 + c[1] * e1;
            if slope.abs() < 1e-300 {
                if base < 0.0 {
                    return 0.0;
                }
            } else {
                let t = -base / slope;
                if slope > 0.0 {
                    lo = lo.max(t);
                } else {
                    hi = hi.min(t);
                }
            }
        }
        if hi > lo {
            0.5 * (hi * hi - lo * lo)
        } else {
            0.0
        }
    };
    // Simpson weights over a periodic integrand.
    let mut sum = 0.0;
    for i in 0..N {
        let phi0 = i as f64 * dphi;
        sum += radial(phi0) + 4.0 * radial(phi0 + 0.5 * dphi) + radial(phi0 + dphi);
    }
    sum * dphi / 6.0
}

/// Sampled bilateral set-equality check inside a ball: both directed
/// sampled sup-distances must stay below `tol`.
pub fn sets_equal_in_ball(a: &MinimalCone, b: &MinimalCone, ball: &Ball, tol: f64) -> bool {
    let spacing = ball.radius / 24.0;
    let sa = match a.sample(ball, spacing) {
        Ok(s) => s,
        Err(_) => return false,
    };
    let sb = match b.sample(ball, spacing) {
        Ok(s) => s,
        Err(_) => return false,
    };
    if sa.is_empty() != sb.is_empty() {
        return false;
    }
    for p in sa.points() {
        if ball.contains(p) && b.distance(p) > tol {
            return false;
        }
    }
    for p in sb.points() {
        if ball.contains(p) && a.distance(p) > tol {
            return false;
        }
    }
    true
}

// JSON wire format: {kind, apex: [x,y,z], quaternion: [w,x,y,z]}.
#[derive(Serialize, Deserialize)]
struct ConeWire {
    kind: ConeKind,
    apex: [f64; 3],
    quaternion: [f64; 4],
}

impl Serialize for MinimalCone {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let q = self.orientation.quaternion();
        ConeWire {
            kind: self.kind,
            apex: [self.apex.x, self.apex.y, self.apex.z],
            quaternion: [q.w, q.i, q.j, q.k],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MinimalCone {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = ConeWire::deserialize(d)?;
        let q = nalgebra::Quaternion::new(
            w.quaternion[0],
            w.quaternion[1],
            w.quaternion[2],
            w.quaternion[3],
        );
        if (q.norm() - 1.0).abs() > 1e-12 {
            return Err(serde::de::Error::custom(format!(
                "quaternion norm {} is not 1 within 1e-12",
                q.norm()
            )));
        }
        Ok(MinimalCone::new(
            w.kind,
            Point::new(w.apex[0], w.apex[1], w.apex[2]),
            UnitQuaternion::from_quaternion(q),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_ball() -> Ball {
        Ball {
            center: Point::origin(),
            radius: 1.0,
        }
    }

    #[test]
    fn d_plus_matches_arc_formula() {
        // Six faces, each the unit cone over a great-circle arc of length
        // acos(-1/3); a sector of angle theta has area theta/2.
        let theta = (-1.0_f64 / 3.0).acos();
        assert!((D_PLUS - 3.0 * theta).abs() < 1e-12);
        assert!(D_PLUS > 1.5 * std::f64::consts::PI);
    }

    #[test]
    fn tetrahedron_is_regular_and_unit() {
        let v = tetrahedron_vertices();
        for a in &v {
            assert_relative_eq!(a.norm(), 1.0, epsilon = 1e-14);
        }
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_relative_eq!(v[i].dot(&v[j]), -1.0 / 3.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn distance_examples() {
        let p = MinimalCone::canonical(ConeKind::P);
        assert!(p.distance(&Point::new(0.3, -0.2, 0.0)) < 1e-12);
        assert_relative_eq!(p.distance(&Point::new(0.0, 0.0, 0.5)), 0.5, epsilon = 1e-12);

        let y = MinimalCone::canonical(ConeKind::Y);
        // (-1, 0, 0) sits between the two back faces, sqrt(3)/2 from each.
        assert_relative_eq!(
            y.distance(&Point::new(-1.0, 0.0, 0.0)),
            3.0_f64.sqrt() / 2.0,
            epsilon = 1e-12
        );

        let t = MinimalCone::canonical(ConeKind::T);
        // A spine vertex direction lies on the cone.
        assert!(t.distance(&Point::new(1.0, 0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn distance_agrees_with_brute_force_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spacing = 0.01;
        for kind in ConeKind::ALL {
            let cone = MinimalCone::canonical(kind);
            let ball = Ball {
                center: Point::origin(),
                radius: 2.0,
            };
            let sample = cone.sample(&ball, spacing).unwrap();
            for _ in 0..1000 {
                let p = Point::new(
                    rng.gen_range(-0.7..0.7),
                    rng.gen_range(-0.7..0.7),
                    rng.gen_range(-0.7..0.7),
                );
                let exact = cone.distance(&p);
                let brute = sample
                    .points()
                    .iter()
                    .map(|q| (p - q).norm())
                    .fold(f64::INFINITY, f64::min);
                // The nearest cone point to p lies within the 2-ball, so the
                // sampled minimum overshoots by at most one spacing.
                assert!(brute >= exact - 1e-12, "{kind}: brute {brute} < exact {exact}");
                assert!(
                    brute - exact <= spacing,
                    "{kind}: brute {brute} vs exact {exact}"
                );
            }
        }
    }

    #[test]
    fn rigid_motion_equivariance_of_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in ConeKind::ALL {
            let cone = MinimalCone::canonical(kind);
            for _ in 0..100 {
                let rot = Rotation::from_euler_angles(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                );
                let shift = Vector::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let moved = cone.transformed(&rot, &shift);
                let p = Point::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let pm = Point::from(rot.transform_point(&p).coords + shift);
                assert!((cone.distance(&p) - moved.distance(&pm)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn apex_centered_areas_match_densities() {
        for kind in ConeKind::ALL {
            let cone = MinimalCone::canonical(kind);
            for r in [0.25, 1.0, 4.0] {
                let ball = Ball {
                    center: Point::origin(),
                    radius: r,
                };
                let area = cone.ball_area(&ball);
                assert_relative_eq!(area, kind.density() * r * r, max_relative = 1e-3);
            }
        }
    }

    #[test]
    fn quadrature_area_matches_exact_branch_off_apex() {
        // Move the ball center along the cone so the quadrature branch runs,
        // then compare against the density formula where it is still exact.
        let p = MinimalCone::canonical(ConeKind::P);
        let ball = Ball {
            center: Point::new(0.3, -0.1, 0.0),
            radius: 0.8,
        };
        // For a plane through the center the area is pi r^2 regardless.
        assert_relative_eq!(
            p.ball_area(&ball),
            std::f64::consts::PI * 0.64,
            max_relative = 1e-6
        );
        // Plane at distance 2 from a unit ball: empty.
        let far = Ball {
            center: Point::new(0.0, 0.0, 2.0),
            radius: 1.0,
        };
        assert_eq!(p.ball_area(&far), 0.0);
        // Offset along the plane normal: disk of radius sqrt(r^2 - h^2).
        let off = Ball {
            center: Point::new(0.0, 0.0, 0.5),
            radius: 1.0,
        };
        assert_relative_eq!(
            p.ball_area(&off),
            std::f64::consts::PI * 0.75,
            max_relative = 1e-6
        );
        // Y cone with the ball centered on the spine off apex: same as
        // apex-centered by translation invariance along the spine.
        let y = MinimalCone::canonical(ConeKind::Y);
        let spine_ball = Ball {
            center: Point::new(0.0, 0.0, 0.4),
            radius: 0.9,
        };
        assert_relative_eq!(
            y.ball_area(&spine_ball),
            ConeKind::Y.density() * 0.81,
            max_relative = 1e-3
        );
    }

    #[test]
    fn monte_carlo_area_oracle() {
        // Independent re-derivation of the T density: rejection sampling on
        // each face over the 2D bounding box of the unit-disk sector.
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let theta = (-1.0_f64 / 3.0).acos();
        let n = 400_000usize;
        let mut total = 0.0;
        for _ in 0..6 {
            let mut hits = 0usize;
            for _ in 0..n {
                let a = rng.gen_range(-1.0..1.0);
                let b = rng.gen_range(0.0..1.0);
                let in_disk = a * a + b * b <= 1.0;
                let in_wedge = b >= 0.0 && a * theta.sin() - b * theta.cos() >= 0.0;
                if in_disk && in_wedge {
                    hits += 1;
                }
            }
            total += hits as f64 / n as f64 * 2.0;
        }
        assert_relative_eq!(total, D_PLUS, max_relative = 5e-3);
    }

    #[test]
    fn sample_weights_sum_to_area() {
        for kind in ConeKind::ALL {
            let cone = MinimalCone::canonical(kind);
            let ball = unit_ball();
            let s = cone.sample(&ball, 0.05).unwrap();
            let total: f64 = s.weights().iter().sum();
            assert_relative_eq!(total, kind.density(), max_relative = 0.02);
            for p in s.points() {
                assert!(cone.distance(p) < 1e-9);
                assert!((p - ball.center).norm() <= ball.radius + 1e-12);
            }
        }
    }

    #[test]
    fn sample_of_disjoint_ball_is_empty() {
        let p = MinimalCone::canonical(ConeKind::P);
        let ball = Ball {
            center: Point::new(0.0, 0.0, 3.0),
            radius: 1.0,
        };
        assert!(p.sample(&ball, 0.1).unwrap().is_empty());
    }

    #[test]
    fn sample_rejects_bad_spacing() {
        let p = MinimalCone::canonical(ConeKind::P);
        assert!(p.sample(&unit_ball(), 0.0).is_err());
        assert!(p.sample(&unit_ball(), 2.0).is_err());
    }

    #[test]
    fn sector_labels_partition_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in ConeKind::ALL {
            let cone = MinimalCone::canonical(kind);
            let mut seen = vec![false; kind.region_count()];
            for _ in 0..4000 {
                let p = Point::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                if cone.distance(&p) < 0.05 {
                    continue;
                }
                let l = cone.sector_label(&p);
                assert!(l < kind.region_count());
                seen[l] = true;
            }
            assert!(seen.iter().all(|&s| s), "{kind}: missing sector");
        }
    }

    #[test]
    fn spine_points_lie_on_cone() {
        for kind in ConeKind::ALL {
            let cone = MinimalCone::canonical(kind);
            let spine = cone.spine();
            match kind {
                ConeKind::P => assert!(spine.rays.is_empty()),
                ConeKind::Y => assert_eq!(spine.rays.len(), 2),
                ConeKind::T => assert_eq!(spine.rays.len(), 4),
            }
            for ray in &spine.rays {
                for t in [0.0, 0.3, 1.7] {
                    assert!(cone.distance(&ray.point_at(t)) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn recenter_identity_when_apex_centered() {
        for kind in ConeKind::ALL {
            let cone = MinimalCone::canonical(kind);
            let x = Point::origin();
            let (r1, z) = cone.recenter(&x, 0.5, 10.0).unwrap();
            assert_eq!(r1, 0.5);
            assert_eq!(z.kind(), kind);
            assert!((z.apex() - x).norm() < 1e-12);
        }
    }

    #[test]
    fn recenter_demotes_y_face_to_plane() {
        let y = MinimalCone::canonical(ConeKind::Y);
        let x = Point::new(5.0, 0.0, 0.0);
        let (r1, z) = y.recenter(&x, 0.1, 10.0).unwrap();
        assert_eq!(r1, 0.1);
        assert_eq!(z.kind(), ConeKind::P);
        // The recentered plane is {x2 = 0}: its normal is +/- e2.
        let n = z.orientation().transform_vector(&Vector::z());
        assert!(n.x.abs() < 1e-9 && n.z.abs() < 1e-9 && (n.y.abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn recenter_keeps_y_near_spine() {
        let y = MinimalCone::new(
            ConeKind::Y,
            Point::new(0.0, 0.0, -0.05),
            Rotation::identity(),
        );
        // x on the spine, 0.05 above the apex (r0 = 1, V = 10).
        let x = Point::origin();
        let (r1, z) = y.recenter(&x, 1.0, 10.0).unwrap();
        assert_eq!(r1, 1.0);
        assert_eq!(z.kind(), ConeKind::Y);
        assert!((z.apex() - x).norm() <= 0.1);
    }

    #[test]
    fn recenter_randomized_post_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for kind in ConeKind::ALL {
            for _ in 0..100 {
                let rot = Rotation::from_euler_angles(
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-3.0..3.0),
                );
                let shift = Vector::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                );
                let cone = MinimalCone::canonical(kind).transformed(&rot, &shift);
                // Random point on the cone via nearest-point projection.
                let raw = Point::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let x = cone.nearest(&raw);
                let r0 = rng.gen_range(0.05..0.5);
                let v = 10.0;
                let (r1, z) = cone.recenter(&x, r0, v).unwrap();
                assert!([r0, v * r0, v * v * r0]
                    .iter()
                    .any(|&r| (r - r1).abs() < 1e-12));
                assert!((z.apex() - x).norm() <= r1 / v + 1e-9 * r1);
                let ball = Ball {
                    center: x,
                    radius: r1,
                };
                assert!(sets_equal_in_ball(&cone, &z, &ball, 1e-6 * r1));
            }
        }
    }

    #[test]
    fn cone_json_round_trip() {
        let y = MinimalCone::new(
            ConeKind::Y,
            Point::new(0.1, 0.2, 0.3),
            Rotation::from_euler_angles(0.3, -0.4, 0.9),
        );
        let text = serde_json::to_string(&y).unwrap();
        assert!(text.contains("\"kind\""));
        assert!(text.contains("\"quaternion\""));
        let back: MinimalCone = serde_json::from_str(&text).unwrap();
        assert_eq!(back.kind(), ConeKind::Y);
        assert!((back.apex() - y.apex()).norm() < 1e-15);
        assert!(back.orientation().angle_to(&y.orientation()) < 1e-12);
    }

    #[test]
    fn bad_quaternion_rejected() {
        let text = r#"{"kind":"P","apex":[0,0,0],"quaternion":[1.0,0.5,0,0]}"#;
        assert!(serde_json::from_str::<MinimalCone>(text).is_err());
    }
}
