//! Scene corpus: volumetric data `g` built from sector constants of a
//! minimal cone, plus synthetic piecewise-constant states with exact cone
//! samples for the quadrature-free checks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeKind, MinimalCone};
use crate::error::{Error, Result};
use crate::geometry::{Ball, Point, Rotation, Vector};
use crate::grid::ScalarGrid;
use crate::sets::DiscreteSet;

/// Constant of the linear gauge `h(r) = GAUGE_CN * |g|_inf^2 * r` induced
/// by the fidelity term. Calibrated once so the gauge stays below the
/// smallness thresholds at `r <= 0.5` on the reference corpus; the a
/// priori dimensional constant is far more conservative.
pub const GAUGE_CN: f64 = 1e-3;

/// Constant of the gradient bound `int |grad u|^2 <= C_N (1 + h(R)) R^2`,
/// calibrated against the worst synthetic scene and frozen.
pub const GRADIENT_BOUND_CN: f64 = 4.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Plane,
    Y,
    T,
}

impl SceneKind {
    pub fn cone_kind(self) -> ConeKind {
        match self {
            SceneKind::Plane => ConeKind::P,
            SceneKind::Y => ConeKind::Y,
            SceneKind::T => ConeKind::T,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plane" | "p" => Ok(SceneKind::Plane),
            "y" => Ok(SceneKind::Y),
            "t" => Ok(SceneKind::T),
            other => Err(Error::InvalidParameter(format!(
                "unknown scene kind '{other}' (expected plane, y or t)"
            ))),
        }
    }
}

impl std::fmt::Display for SceneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SceneKind::Plane => f.write_str("plane"),
            SceneKind::Y => f.write_str("y"),
            SceneKind::T => f.write_str("t"),
        }
    }
}

/// Shape of the interface perturbation on plane scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PerturbShape {
    /// Product of sines with the given wavelength.
    #[default]
    Sine,
    /// Radial paraboloid `amplitude * rho^2` around the scene center.
    Paraboloid,
}

/// Declarative description of a scene; `build` turns it into data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// One value per cone sector (2 for plane, 3 for Y, 4 for T).
    pub contrasts: Vec<f64>,
    /// Graph-bump amplitude of the interface (plane scenes only); for the
    /// paraboloid shape this is the quadratic coefficient.
    #[serde(default)]
    pub perturb_amplitude: f64,
    /// Wavelength of the sine bump.
    #[serde(default = "default_wavelength")]
    pub perturb_wavelength: f64,
    #[serde(default)]
    pub perturb_shape: PerturbShape,
    /// Uniform noise amplitude added to `g`.
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    pub grid_n: usize,
    #[serde(default)]
    pub id: Option<String>,
}

fn default_wavelength() -> f64 {
    0.5
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            kind: SceneKind::Plane,
            contrasts: vec![0.0, 1.0],
            perturb_amplitude: 0.0,
            perturb_wavelength: default_wavelength(),
            perturb_shape: PerturbShape::Sine,
            noise_amplitude: 0.0,
            seed: 0,
            grid_n: 64,
            id: None,
        }
    }
}

/// Built scene: the data grid, the generating cone and the induced gauge
/// constant `GAUGE_CN * |g|_inf^2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub spec: SceneSpec,
    pub g: ScalarGrid,
    pub cone: MinimalCone,
    pub center: Point,
    pub gauge_constant: f64,
}

impl Scene {
    /// Linear gauge evaluated at radius `r`.
    pub fn gauge(&self, r: f64) -> f64 {
        self.gauge_constant * r
    }
}

/// Scene cone with the conventional lab orientation: plane cracks are
/// `{x = cx}`, Y spines run along `e_z`, T keeps its canonical frame.
pub fn scene_cone(kind: SceneKind, center: Point) -> MinimalCone {
    match kind {
        SceneKind::Plane => MinimalCone::plane(center, &Vector::x()),
        SceneKind::Y => MinimalCone::new(ConeKind::Y, center, Rotation::identity()),
        SceneKind::T => MinimalCone::new(ConeKind::T, center, Rotation::identity()),
    }
}

impl SceneSpec {
    pub fn scene_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            format!("{}-n{}-s{}", self.kind, self.grid_n, self.seed)
        })
    }

    pub fn build(&self) -> Result<Scene> {
        let kind = self.kind.cone_kind();
        if self.contrasts.len() != kind.region_count() {
            return Err(Error::InvalidParameter(format!(
                "scene kind {} needs {} contrasts, got {}",
                self.kind,
                kind.region_count(),
                self.contrasts.len()
            )));
        }
        if self.perturb_amplitude != 0.0 && self.kind != SceneKind::Plane {
            return Err(Error::InvalidParameter(
                "interface perturbation is only supported on plane scenes".into(),
            ));
        }
        let mut g = ScalarGrid::unit_cube(self.grid_n)?;
        let center = Point::new(0.5, 0.5, 0.5);
        let cone = scene_cone(self.kind, center);
        for lin in 0..g.len() {
            let (i, j, k) = g.coords(lin);
            let p = g.cell_center(i, j, k);
            let label = self.sector_of(&cone, &center, &p);
            g.values[lin] = self.contrasts[label];
        }
        if self.noise_amplitude > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for v in g.values.iter_mut() {
                *v += rng.gen_range(-self.noise_amplitude..self.noise_amplitude);
            }
        }
        let max_abs = g
            .values
            .iter()
            .fold(0.0_f64, |acc, &v| acc.max(v.abs()));
        Ok(Scene {
            id: self.scene_id(),
            spec: self.clone(),
            g,
            cone,
            center,
            gauge_constant: GAUGE_CN * max_abs * max_abs,
        })
    }

    /// Interface offset of the perturbed plane at in-plane position
    /// `(dy, dz)` from the center.
    pub fn bump(&self, dy: f64, dz: f64) -> f64 {
        match self.perturb_shape {
            PerturbShape::Sine => {
                self.perturb_amplitude
                    * (2.0 * std::f64::consts::PI * dy / self.perturb_wavelength).sin()
                    * (2.0 * std::f64::consts::PI * dz / self.perturb_wavelength).sin()
            }
            PerturbShape::Paraboloid => self.perturb_amplitude * (dy * dy + dz * dz),
        }
    }

    /// Sector label of `p`, with the optional graph bump applied to plane
    /// interfaces.
    fn sector_of(&self, cone: &MinimalCone, center: &Point, p: &Point) -> usize {
        if self.kind == SceneKind::Plane && self.perturb_amplitude != 0.0 {
            let rel = p - center;
            let bump = self.bump(rel.y, rel.z);
            return if rel.x - bump >= 0.0 { 0 } else { 1 };
        }
        cone.sector_label(p)
    }

    /// The perturbed interface as a point sample (plane scenes): the graph
    /// `x = cx + bump(y, z)` sampled at `spacing` inside the ball.
    pub fn perturbed_interface_sample(&self, ball: &Ball, spacing: f64) -> Result<DiscreteSet> {
        if self.kind != SceneKind::Plane {
            return Err(Error::InvalidParameter(
                "interface sample is only defined for plane scenes".into(),
            ));
        }
        let center = Point::new(0.5, 0.5, 0.5);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let r = ball.radius;
        let steps = (2.0 * r / spacing).ceil() as i64;
        for jy in -steps..=steps {
            for jz in -steps..=steps {
                let y = ball.center.y + jy as f64 * spacing;
                let z = ball.center.z + jz as f64 * spacing;
                let bump = self.bump(y - center.y, z - center.z);
                let p = Point::new(center.x + bump, y, z);
                if ball.contains(&p) {
                    points.push(p);
                    weights.push(spacing * spacing);
                }
            }
        }
        if points.is_empty() {
            return Ok(DiscreteSet::empty(spacing));
        }
        Ok(DiscreteSet::new(points, weights, spacing))
    }
}

/// Variant of the synthetic singular set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SyntheticVariant {
    /// Exact cone sample.
    Exact,
    /// Cone sample with a disk of the given radius removed around a point.
    Hole { center_offset: f64, radius: f64 },
    /// Cone sample plus an orthogonal square flap of the given side,
    /// attached at the given in-cone offset from the center.
    Bump { size: f64, offset: f64 },
}

/// Piecewise-constant state: exact sector constants for `u` and an exact
/// cone sample for `K`. The pair feeds the quadrature-free checks where
/// the scale laws hold exactly.
#[derive(Debug, Clone)]
pub struct SyntheticState {
    pub u: ScalarGrid,
    pub k: DiscreteSet,
    pub cone: MinimalCone,
    pub center: Point,
}

pub fn synthetic_state(
    kind: SceneKind,
    contrasts: &[f64],
    grid_n: usize,
    sample_spacing: f64,
    sample_radius: f64,
    variant: SyntheticVariant,
) -> Result<SyntheticState> {
    let cone_kind = kind.cone_kind();
    if contrasts.len() != cone_kind.region_count() {
        return Err(Error::InvalidParameter(format!(
            "synthetic scene kind {kind} needs {} contrasts",
            cone_kind.region_count()
        )));
    }
    let center = Point::new(0.5, 0.5, 0.5);
    let cone = scene_cone(kind, center);
    let mut u = ScalarGrid::unit_cube(grid_n)?;
    for lin in 0..u.len() {
        let (i, j, k) = u.coords(lin);
        let p = u.cell_center(i, j, k);
        u.values[lin] = contrasts[cone.sector_label(&p)];
    }
    let ball = Ball {
        center,
        radius: sample_radius,
    };
    let base = cone.sample(&ball, sample_spacing)?;
    let k = match variant {
        SyntheticVariant::Exact => base,
        SyntheticVariant::Hole {
            center_offset,
            radius,
        } => {
            let hole_center = hole_anchor(&cone, &center, center_offset);
            let mut pts = Vec::new();
            let mut wts = Vec::new();
            for (p, w) in base.points().iter().zip(base.weights()) {
                if (p - hole_center).norm() >= radius {
                    pts.push(*p);
                    wts.push(*w);
                }
            }
            DiscreteSet::new(pts, wts, sample_spacing)
        }
        SyntheticVariant::Bump { size, offset } => {
            let mut set = base;
            let anchor = hole_anchor(&cone, &center, offset);
            let normal = flap_normal(&cone, &anchor);
            let (t1, _t2) = tangent_frame(&normal);
            // Square flap standing on the cone along t1, extending along
            // the normal.
            let n_steps = (size / sample_spacing).ceil() as i64;
            for a in 0..=n_steps {
                for b in -n_steps / 2..=n_steps / 2 {
                    let p = anchor
                        + normal * (a as f64 * sample_spacing)
                        + t1 * (b as f64 * sample_spacing);
                    set.push(p, sample_spacing * sample_spacing);
                }
            }
            set
        }
    };
    Ok(SyntheticState { u, k, cone, center })
}

/// A point on the cone at the given in-cone offset from the center, used
/// to anchor holes and flaps away from the spine.
fn hole_anchor(cone: &MinimalCone, center: &Point, offset: f64) -> Point {
    if offset == 0.0 {
        return *center;
    }
    // Walk along the first face away from the apex.
    let probe = match cone.kind() {
        ConeKind::P => *center + Vector::new(0.0, offset, 0.0),
        _ => *center + Vector::new(offset, 0.0, 0.0),
    };
    cone.nearest(&probe)
}

fn flap_normal(cone: &MinimalCone, anchor: &Point) -> Vector {
    // Normal of the face at the anchor, from the nearest-point offset of a
    // slightly displaced probe.
    for probe_dir in [Vector::x(), Vector::y(), Vector::z()] {
        let probe = anchor + probe_dir * 1e-3;
        let foot = cone.nearest(&probe);
        let n = probe - foot;
        if n.norm() > 1e-6 {
            return n.normalize();
        }
    }
    Vector::z()
}

fn tangent_frame(n: &Vector) -> (Vector, Vector) {
    let pick = if n.x.abs() < 0.9 { Vector::x() } else { Vector::y() };
    let t1 = n.cross(&pick).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}
