//! Distances between discrete sets and cones: the unilateral sup-distance
//! beta, the bilateral normalized Hausdorff distance, cone fitting over the
//! three kinds, separation testing by voxel flood fill, and discrete area /
//! density excess.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeKind, MinimalCone};
use crate::error::{Error, Result};
use crate::geometry::{
    octahedral_rotations, quaternion_spiral, Ball, Point, Rotation, Vector,
};
use crate::sets::{DiscreteSet, VoxelIndex};

/// `beta`-style normalized unilateral distance: `(1/r) sup { d(y, Z) : y in
/// E cap B }`, zero when the restriction is empty.
pub fn unilateral_distance(e: &DiscreteSet, z: &MinimalCone, b: &Ball) -> f64 {
    let r2 = b.radius * b.radius;
    let sup = e
        .points()
        .iter()
        .filter(|p| (*p - b.center).norm_squared() <= r2)
        .map(|p| z.distance(p))
        .fold(0.0_f64, f64::max);
    sup / b.radius
}

/// Normalized bilateral Hausdorff distance `D_{x,r}` between two sampled
/// sets: `(1/r) max(sup_{E cap B} d(., F), sup_{F cap B} d(., E))`, with the
/// inner distances taken to the full sets. `None` when either restriction
/// is empty.
pub fn hausdorff(e: &DiscreteSet, f: &DiscreteSet, b: &Ball) -> Option<f64> {
    let ei = e.indices_in_ball(b);
    let fi = f.indices_in_ball(b);
    if ei.is_empty() || fi.is_empty() {
        return None;
    }
    let f_index = VoxelIndex::build(f);
    let e_index = VoxelIndex::build(e);
    let sup_ef = ei
        .iter()
        .map(|&i| f_index.nearest_sq(&e.points()[i]).unwrap_or(f64::INFINITY))
        .fold(0.0_f64, f64::max);
    let sup_fe = fi
        .iter()
        .map(|&i| e_index.nearest_sq(&f.points()[i]).unwrap_or(f64::INFINITY))
        .fold(0.0_f64, f64::max);
    Some(sup_ef.max(sup_fe).sqrt() / b.radius)
}

/// Result of a cone fit: the best cone found, its beta value, and the kinds
/// that were searched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeFit {
    pub cone: MinimalCone,
    pub beta: f64,
    pub kind_searched: Vec<ConeKind>,
}

/// Search parameters for [`fit_cone`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Number of coarse orientations (low-discrepancy spiral composed with
    /// the 24 octahedral rotations).
    pub orientations: usize,
    /// Coarse candidates kept per kind for local refinement.
    pub refine_top: usize,
    /// Point budget for the coarse stage (the sample is strided down to
    /// this size; the final beta always uses every point).
    pub coarse_points: usize,
    /// Step-halving rounds of the pattern search.
    pub refine_rounds: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            orientations: 576,
            refine_top: 6,
            coarse_points: 3000,
            refine_rounds: 48,
        }
    }
}

/// Sup distance of the in-ball points to the cone, with early abort once
/// the running sup exceeds `cutoff`.
fn sup_distance(points: &[Point], cone: &MinimalCone, cutoff: f64) -> f64 {
    let mut sup = 0.0_f64;
    for p in points {
        let d = cone.distance(p);
        if d > sup {
            sup = d;
            if sup > cutoff {
                return sup;
            }
        }
    }
    sup
}

fn sup_distance_par(points: &[Point], cone: &MinimalCone) -> f64 {
    points
        .par_iter()
        .with_min_len(512)
        .map(|p| cone.distance(p))
        .reduce(|| 0.0, f64::max)
}

/// Deterministic pseudo-shuffle so sup evaluations hit spread-out points
/// early and abort sooner.
fn probe_order(points: &[Point]) -> Vec<Point> {
    let n = points.len();
    if n < 3 {
        return points.to_vec();
    }
    let mut stride = 7919 % n;
    while stride == 0 || gcd(stride, n) != 1 {
        stride = (stride + 1) % n.max(2);
        if stride == 0 {
            stride = 1;
        }
    }
    (0..n).map(|i| points[(i * stride) % n]).collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Apex ray directions (in canonical coordinates) on which the constraint
/// point can sit, per kind: apex, spine rays, and face midlines.
fn element_dirs(kind: ConeKind) -> Vec<Vector> {
    match kind {
        ConeKind::P => vec![],
        ConeKind::Y => {
            let mut dirs = vec![Vector::z(), -Vector::z()];
            let c = 0.5;
            let s = 3.0_f64.sqrt() / 2.0;
            for d in [
                Vector::new(1.0, 0.0, 0.0),
                Vector::new(-c, s, 0.0),
                Vector::new(-c, -s, 0.0),
            ] {
                dirs.push(d);
            }
            dirs
        }
        ConeKind::T => {
            let verts = crate::cone::tetrahedron_vertices();
            let mut dirs: Vec<Vector> = verts.to_vec();
            for i in 0..4 {
                for j in (i + 1)..4 {
                    dirs.push((verts[i] + verts[j]).normalize());
                }
            }
            dirs
        }
    }
}

/// Fit a minimal cone to the in-ball points of `E`, over the given kinds,
/// among cones whose set contains `constraint`: coarse orientation grid
/// with apex candidates on the ray bundle through the constraint point,
/// then a derivative-free pattern search that keeps the containment
/// constraint by re-projecting the apex after every move.
pub fn fit_cone(
    e: &DiscreteSet,
    b: &Ball,
    kinds: &[ConeKind],
    constraint: Point,
    cfg: &FitConfig,
) -> Result<ConeFit> {
    fit_cone_impl(e, b, kinds, constraint, cfg, None)
}

/// Budgeted variant for good-ball certification: the coarse scan stops as
/// soon as a candidate proves `beta <= stop_at`, and only the single best
/// candidate is refined.
pub fn fit_cone_stop_early(
    e: &DiscreteSet,
    b: &Ball,
    kinds: &[ConeKind],
    constraint: Point,
    cfg: &FitConfig,
    stop_at: f64,
) -> Result<ConeFit> {
    fit_cone_impl(e, b, kinds, constraint, cfg, Some(stop_at))
}

fn fit_cone_impl(
    e: &DiscreteSet,
    b: &Ball,
    kinds: &[ConeKind],
    constraint: Point,
    cfg: &FitConfig,
    stop_at: Option<f64>,
) -> Result<ConeFit> {
    let idx = e.indices_in_ball(b);
    if idx.is_empty() {
        return Err(Error::EmptyIntersection(
            "fit_cone: no sample points in the ball".into(),
        ));
    }
    let points: Vec<Point> = {
        let raw: Vec<Point> = idx.iter().map(|&i| e.points()[i]).collect();
        probe_order(&raw)
    };
    let stride = (points.len() / cfg.coarse_points).max(1);
    let coarse_pts: Vec<Point> = points.iter().step_by(stride).copied().collect();

    let base = quaternion_spiral(cfg.orientations.div_euclid(24).max(1));
    let oct = octahedral_rotations();
    let mut orientations: Vec<Rotation> = Vec::with_capacity(base.len() * 24);
    for o in &oct {
        for q in &base {
            orientations.push(o * q);
        }
    }

    let r = b.radius;
    let ladder = [0.05 * r, 0.15 * r, 0.4 * r, 0.9 * r, 2.0 * r];
    let stop_sup = stop_at.map(|s| s * r);

    let mut best_per_kind: Vec<(ConeKind, f64, MinimalCone)> = Vec::new();
    'kinds: for &kind in kinds {
        let dirs = element_dirs(kind);
        // Coarse stage: sequential scan with a shared top-M cutoff so bad
        // candidates abort after a handful of points.
        let keep = if stop_at.is_some() { 1 } else { cfg.refine_top };
        let mut coarse: Vec<(f64, MinimalCone)> = Vec::new();
        let mut cutoff = f64::INFINITY;
        {
            let consider =
                |apex: Point, rot: &Rotation, coarse: &mut Vec<(f64, MinimalCone)>, cutoff: &mut f64| {
                    let cone = MinimalCone::new(kind, apex, *rot);
                    let sup = sup_distance(&coarse_pts, &cone, *cutoff);
                    if sup < *cutoff {
                        coarse.push((sup, cone));
                        coarse.sort_by(|a, b| a.0.total_cmp(&b.0));
                        coarse.truncate(keep);
                        if coarse.len() == keep {
                            *cutoff = coarse.last().unwrap().0;
                        }
                    }
                };
            'scan: for rot in &orientations {
                consider(constraint, rot, &mut coarse, &mut cutoff);
                if let Some(s) = stop_sup {
                    if cutoff <= s {
                        break 'scan;
                    }
                }
                for d in &dirs {
                    let wd = rot.transform_vector(d);
                    for &t in &ladder {
                        consider(constraint - wd * t, rot, &mut coarse, &mut cutoff);
                    }
                }
                if let Some(s) = stop_sup {
                    if cutoff <= s {
                        break 'scan;
                    }
                }
            }
        }

        let mut kind_best: Option<(f64, MinimalCone)> = None;
        for (sup0, cone0) in coarse {
            let refined = refine_fit(&points, cone0, sup0, constraint, r, cfg);
            if kind_best.as_ref().map_or(true, |(bsup, _)| refined.0 < *bsup) {
                kind_best = Some(refined);
            }
        }
        if let Some((sup, cone)) = kind_best {
            best_per_kind.push((kind, sup, cone));
            if let Some(s) = stop_sup {
                if sup <= s {
                    break 'kinds;
                }
            }
        }
    }

    if best_per_kind.is_empty() {
        return Err(Error::InvalidParameter("fit_cone: empty kind list".into()));
    }
    // A cone of higher type degenerates to any lower one as its apex
    // recedes, so near-ties are endemic; prefer the simplest kind within
    // a margin of the best.
    let best_sup = best_per_kind
        .iter()
        .map(|(_, s, _)| *s)
        .fold(f64::INFINITY, f64::min);
    let margin = 1.5 * best_sup + 0.25 * e.spacing();
    let (_, sup, cone) = best_per_kind
        .iter()
        .filter(|(_, s, _)| *s <= margin)
        .min_by_key(|(k, _, _)| k.type_index())
        .expect("at least the best candidate is within the margin")
        .clone();
    Ok(ConeFit {
        cone: cone.with_apex_near(&b.center),
        beta: sup / r,
        kind_searched: kinds.to_vec(),
    })
}

/// Refine a fit from a given starting cone (warm start). The containment
/// constraint is enforced the same way as in [`fit_cone`].
pub fn polish_fit(
    e: &DiscreteSet,
    b: &Ball,
    start: &MinimalCone,
    constraint: Point,
    cfg: &FitConfig,
) -> Result<ConeFit> {
    let idx = e.indices_in_ball(b);
    if idx.is_empty() {
        return Err(Error::EmptyIntersection(
            "polish_fit: no sample points in the ball".into(),
        ));
    }
    let points: Vec<Point> = idx.iter().map(|&i| e.points()[i]).collect();
    let start_sup = sup_distance(&points, start, f64::INFINITY);
    let (sup, cone) = refine_fit(&points, start.clone(), start_sup, constraint, b.radius, cfg);
    Ok(ConeFit {
        cone: cone.with_apex_near(&b.center),
        beta: sup / b.radius,
        kind_searched: vec![start.kind()],
    })
}

/// Local refinement: a Gauss-Newton least-squares polish (which lands at
/// machine precision on exact samples) followed by a pattern search on the
/// sup objective. The containment constraint is kept by re-projecting the
/// apex after every move.
fn refine_fit(
    points: &[Point],
    start: MinimalCone,
    start_sup: f64,
    constraint: Point,
    r: f64,
    cfg: &FitConfig,
) -> (f64, MinimalCone) {
    let kind = start.kind();
    let project = |cone: &MinimalCone| -> MinimalCone {
        let z = cone.nearest(&constraint);
        MinimalCone::new(kind, cone.apex() + (constraint - z), cone.orientation())
    };
    let mut best = project(&start);
    let mut best_sup = sup_distance(points, &best, f64::INFINITY);
    if start_sup < best_sup {
        best = start;
        best_sup = start_sup;
    }

    let ls = least_squares_polish(points, &best, &project);
    let ls_sup = sup_distance(points, &ls, best_sup);
    if ls_sup < best_sup {
        best_sup = ls_sup;
        best = ls;
    }

    let mut rot_step = 0.1_f64;
    let mut pos_step = 0.1 * r;
    let axes = [Vector::x(), Vector::y(), Vector::z()];
    let diag = [
        Vector::new(1.0, 1.0, 1.0).normalize(),
        Vector::new(1.0, -1.0, 1.0).normalize(),
        Vector::new(-1.0, 1.0, 1.0).normalize(),
        Vector::new(1.0, 1.0, -1.0).normalize(),
    ];
    for _ in 0..cfg.refine_rounds {
        let mut improved = false;
        let try_cand = |cand: MinimalCone, best: &mut MinimalCone, best_sup: &mut f64| {
            let sup = sup_distance(points, &cand, *best_sup);
            if sup < *best_sup {
                *best_sup = sup;
                *best = cand;
                true
            } else {
                false
            }
        };
        for axis in axes.iter().chain(diag.iter()) {
            for sign in [-1.0, 1.0] {
                let dq = Rotation::from_scaled_axis(axis * (sign * rot_step));
                let cand = project(&MinimalCone::new(kind, best.apex(), dq * best.orientation()));
                improved |= try_cand(cand, &mut best, &mut best_sup);
            }
        }
        if kind != ConeKind::P {
            for axis in &axes {
                for sign in [-1.0, 1.0] {
                    let cand = project(&MinimalCone::new(
                        kind,
                        best.apex() + axis * (sign * pos_step),
                        best.orientation(),
                    ));
                    improved |= try_cand(cand, &mut best, &mut best_sup);
                }
            }
        }
        if improved {
            rot_step = (rot_step * 1.5).min(0.2);
            pos_step = (pos_step * 1.5).min(0.2 * r);
        } else {
            rot_step *= 0.4;
            pos_step *= 0.4;
            if rot_step < 1e-9 && pos_step < 1e-9 * r {
                break;
            }
        }
    }
    (best_sup, best)
}

/// Gauss-Newton on the summed squared point-to-cone distances over
/// (apex, orientation). Residual gradients come from the nearest-point
/// direction: moving the apex by `da` changes `d` by `-u . da`, rotating
/// by `dw` about the apex changes it by `-dw . ((q - a) x u)`, with `u`
/// the unit offset from the nearest point `q`.
fn least_squares_polish(
    points: &[Point],
    start: &MinimalCone,
    project: &dyn Fn(&MinimalCone) -> MinimalCone,
) -> MinimalCone {
    let kind = start.kind();
    let mut cone = start.clone();
    let mut prev_cost = f64::INFINITY;
    for _ in 0..25 {
        let mut jtj = nalgebra::Matrix6::<f64>::zeros();
        let mut jtr = nalgebra::Vector6::<f64>::zeros();
        let mut cost = 0.0;
        let apex = cone.apex();
        for p in points {
            let (q, d) = cone.nearest_with_distance(p);
            cost += d * d;
            if d < 1e-13 {
                continue;
            }
            let u = (p - q) / d;
            let arm = (q - apex).cross(&u);
            let jrow = nalgebra::Vector6::new(-u.x, -u.y, -u.z, -arm.x, -arm.y, -arm.z);
            jtj += jrow * jrow.transpose();
            jtr += jrow * d;
        }
        if cost >= prev_cost * (1.0 - 1e-12) {
            break;
        }
        prev_cost = cost;
        // Levenberg damping keeps the step sane near degeneracy.
        let damped = jtj + nalgebra::Matrix6::identity() * (1e-9 * (1.0 + jtj.trace()));
        let Some(step) = damped.lu().solve(&(-jtr)) else {
            break;
        };
        let da = Vector::new(step[0], step[1], step[2]);
        let dw = Vector::new(step[3], step[4], step[5]);
        let dq = Rotation::from_scaled_axis(dw);
        let cand = project(&MinimalCone::new(
            kind,
            apex + da,
            dq * cone.orientation(),
        ));
        cone = cand;
    }
    cone
}

/// Outcome of the separation test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationReport {
    pub separating: bool,
    /// Number of tube-complement regions found in the ball.
    pub component_count: usize,
    /// Flood-fill labels per raster cell (0 = wall or outside the ball).
    pub labels: LabelVolume,
}

/// Flat label volume with its raster geometry, exportable as binary u8
/// plus a JSON sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelVolume {
    pub dims: [usize; 3],
    pub spacing: f64,
    pub origin: [f64; 3],
    #[serde(skip)]
    pub data: Vec<u8>,
}

impl LabelVolume {
    pub fn save(&self, base: &std::path::Path) -> Result<()> {
        let bin_path = crate::grid::sibling(base, "u8");
        std::fs::write(&bin_path, &self.data)?;
        let sidecar = crate::grid::sibling(base, "json");
        let meta = serde_json::json!({
            "dims": self.dims,
            "spacing": self.spacing,
            "origin": self.origin,
            "data_file": bin_path.file_name().map(|s| s.to_string_lossy().into_owned()),
        });
        std::fs::write(sidecar, serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }
}

/// Voxel separation test: rasterize the ball, remove cells within one
/// sample spacing of `E`, label the 6-connected free components, and check
/// that the tube-complement sectors of `Z` land in pairwise distinct
/// components. Errors when `E` is not inside the `eps0`-tube of `Z`.
pub fn separating_check(
    e: &DiscreteSet,
    b: &Ball,
    z: &MinimalCone,
    eps0: f64,
) -> Result<SeparationReport> {
    let beta = unilateral_distance(e, z, b);
    if beta > eps0 {
        return Err(Error::Precondition(format!(
            "separating_check: E is not inside the eps0-tube (beta = {beta:.3e} > {eps0:.3e})"
        )));
    }
    let r = b.radius;
    // Raster pitch: the sample spacing, capped so the grid stays small.
    let pitch = e.spacing().max(2.0 * r / 120.0);
    let wall_radius = e.spacing().max(pitch);
    let n = (2.0 * r / pitch).ceil() as usize + 1;
    let origin = b.center - Vector::new(r, r, r);
    let cell_center = |i: usize, j: usize, k: usize| -> Point {
        origin + Vector::new(
            (i as f64 + 0.5) * pitch,
            (j as f64 + 0.5) * pitch,
            (k as f64 + 0.5) * pitch,
        )
    };
    let at = |i: usize, j: usize, k: usize| -> usize { i + n * (j + n * k) };

    let index = VoxelIndex::build(e);
    // 0 = outside/wall, otherwise 1 + component id.
    let mut labels = vec![0u8; n * n * n];
    let mut free = vec![false; n * n * n];
    let free_flags: Vec<bool> = (0..n * n * n)
        .into_par_iter()
        .map(|lin| {
            let i = lin % n;
            let j = (lin / n) % n;
            let k = lin / (n * n);
            let p = cell_center(i, j, k);
            if !b.contains(&p) {
                return false;
            }
            !index.any_within(&p, wall_radius)
        })
        .collect();
    free.copy_from_slice(&free_flags);

    // 6-connected flood fill.
    let mut next_label = 0u8;
    let mut stack: Vec<usize> = Vec::new();
    for start in 0..labels.len() {
        if !free[start] || labels[start] != 0 {
            continue;
        }
        if next_label == u8::MAX {
            return Err(Error::SeparationUnachievable(
                "more than 254 free components".into(),
            ));
        }
        next_label += 1;
        labels[start] = next_label;
        stack.push(start);
        while let Some(lin) = stack.pop() {
            let i = lin % n;
            let j = (lin / n) % n;
            let k = lin / (n * n);
            let mut push = |ni: usize, nj: usize, nk: usize, stack: &mut Vec<usize>| {
                let nl = at(ni, nj, nk);
                if free[nl] && labels[nl] == 0 {
                    labels[nl] = next_label;
                    stack.push(nl);
                }
            };
            if i > 0 {
                push(i - 1, j, k, &mut stack);
            }
            if i + 1 < n {
                push(i + 1, j, k, &mut stack);
            }
            if j > 0 {
                push(i, j - 1, k, &mut stack);
            }
            if j + 1 < n {
                push(i, j + 1, k, &mut stack);
            }
            if k > 0 {
                push(i, j, k - 1, &mut stack);
            }
            if k + 1 < n {
                push(i, j, k + 1, &mut stack);
            }
        }
    }

    // Reference regions: analytic sectors of Z outside the 2 eps0 tube.
    let k_regions = z.kind().region_count();
    let mut sector_flood: Vec<Option<u8>> = vec![None; k_regions];
    let mut sectors_present = vec![false; k_regions];
    let mut separating = true;
    for lin in 0..labels.len() {
        if labels[lin] == 0 {
            continue;
        }
        let i = lin % n;
        let j = (lin / n) % n;
        let k = lin / (n * n);
        let p = cell_center(i, j, k);
        let dz = z.distance(&p);
        if dz > 2.0 * eps0 * r {
            sectors_present[z.sector_label(&p)] = true;
        }
        if dz > eps0 * r {
            let s = z.sector_label(&p);
            match sector_flood[s] {
                None => sector_flood[s] = Some(labels[lin]),
                Some(l) if l == labels[lin] => {}
                Some(_) => {
                    // Same sector split across flood components can only
                    // happen from raster artifacts near the tube boundary;
                    // keep the first label, the pairwise check below
                    // decides separation.
                }
            }
        }
    }
    let component_count = sectors_present.iter().filter(|&&s| s).count();
    // Distinct sectors must never share a flood label. Scan again so every
    // (cell, sector) pair is checked, not just the first representative.
    let mut sector_of_flood: Vec<Option<usize>> = vec![None; next_label as usize + 1];
    for lin in 0..labels.len() {
        if labels[lin] == 0 {
            continue;
        }
        let i = lin % n;
        let j = (lin / n) % n;
        let k = lin / (n * n);
        let p = cell_center(i, j, k);
        if z.distance(&p) > eps0 * r {
            let s = z.sector_label(&p);
            let slot = &mut sector_of_flood[labels[lin] as usize];
            match slot {
                None => *slot = Some(s),
                Some(prev) if *prev == s => {}
                Some(_) => {
                    separating = false;
                }
            }
        }
    }

    Ok(SeparationReport {
        separating,
        component_count,
        labels: LabelVolume {
            dims: [n, n, n],
            spacing: pitch,
            origin: [origin.x, origin.y, origin.z],
            data: labels,
        },
    })
}

/// Weighted area of `E cap B` with the half-weight rule on the boundary
/// shell of thickness one spacing.
pub fn discrete_area(e: &DiscreteSet, b: &Ball) -> f64 {
    let s = e.spacing();
    let inner = b.radius - 0.5 * s;
    let outer = b.radius + 0.5 * s;
    let mut total = 0.0;
    for (p, w) in e.points().iter().zip(e.weights()) {
        let d = (p - b.center).norm();
        if d <= inner {
            total += w;
        } else if d <= outer {
            total += 0.5 * w;
        }
    }
    total
}

/// Density excess `f(x, r) = r^{-2} H^2(E cap B(x,r)) - density(kind)`.
/// May come out negative on discrete data; the raw value is returned.
pub fn excess_density(e: &DiscreteSet, x: &Point, r: f64, kind: ConeKind) -> f64 {
    let ball = Ball {
        center: *x,
        radius: r,
    };
    discrete_area(e, &ball) / (r * r) - kind.density()
}

/// Evaluate the sup distance over every in-ball point (no early abort),
/// parallel deterministic max. Exposed for oracles in tests and for the
/// multiscale layer's cheap cone-closeness path.
pub fn sup_distance_in_ball(e: &DiscreteSet, z: &MinimalCone, b: &Ball) -> f64 {
    let pts: Vec<Point> = e
        .indices_in_ball(b)
        .into_iter()
        .map(|i| e.points()[i])
        .collect();
    sup_distance_par(&pts, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{ConeKind, MinimalCone};
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
    fn unilateral_distance_on_exact_sample() {
        let z = MinimalCone::canonical(ConeKind::Y);
        let s = z.sample(&unit_ball(), 0.05).unwrap();
        assert!(unilateral_distance(&s, &z, &unit_ball()) <= 0.05);
    }

    #[test]
    fn unilateral_distance_single_offset_point() {
        let z = MinimalCone::canonical(ConeKind::P);
        let b = unit_ball();
        let e = DiscreteSet::new(vec![Point::new(0.0, 0.0, 0.3)], vec![1.0], 0.1);
        assert_relative_eq!(unilateral_distance(&e, &z, &b), 0.3, epsilon = 1e-12);
        let empty = DiscreteSet::empty(0.1);
        assert_eq!(unilateral_distance(&empty, &z, &b), 0.0);
    }

    #[test]
    fn unilateral_noise_bound() {
        // Perturb an exact sample by amplitude delta along the normal
        // direction; the sup must land in [0.8 delta, delta] / r.
        let z = MinimalCone::canonical(ConeKind::Y);
        let b = unit_ball();
        let base = z.sample(&b, 0.05).unwrap();
        let delta = 0.02;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<Point> = base
            .points()
            .iter()
            .map(|p| {
                let d = Vector::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
                .normalize();
                p + d * rng.gen_range(0.5 * delta..delta)
            })
            .collect();
        let n = pts.len();
        let e = DiscreteSet::new(pts.clone(), vec![1.0; n], 0.05);
        let got = unilateral_distance(&e, &z, &b);
        // Brute-force oracle over the perturbed sample.
        let brute = pts
            .iter()
            .filter(|p| b.contains(p))
            .map(|p| z.distance(p))
            .fold(0.0_f64, f64::max);
        assert_relative_eq!(got, brute, epsilon = 1e-12);
        assert!(got >= 0.4 * delta && got <= delta, "got {got}");
    }

    #[test]
    fn hausdorff_identical_and_offset() {
        let z = MinimalCone::canonical(ConeKind::P);
        let b = unit_ball();
        let e = z.sample(&b, 0.05).unwrap();
        assert_eq!(hausdorff(&e, &e, &b), Some(0.0));

        let c = Point::origin();
        let one = DiscreteSet::new(vec![c], vec![1.0], 0.1);
        let other = DiscreteSet::new(vec![Point::new(1.0, 0.0, 0.0)], vec![1.0], 0.1);
        assert_relative_eq!(hausdorff(&one, &other, &b).unwrap(), 1.0, epsilon = 1e-12);
        let empty = DiscreteSet::empty(0.1);
        assert_eq!(hausdorff(&one, &empty, &b), None);
    }

    #[test]
    fn hausdorff_plane_offset_small_samples() {
        let z = MinimalCone::canonical(ConeKind::P);
        let b = unit_ball();
        let e = z.sample(&b.scaled(1.2), 0.04).unwrap();
        let shift = Vector::new(0.0, 0.0, 0.1);
        let pts: Vec<Point> = e.points().iter().map(|p| p + shift).collect();
        let n = pts.len();
        let f = DiscreteSet::new(pts, vec![1.0; n], 0.04);
        let d = hausdorff(&e, &f, &b).unwrap();
        assert!((d - 0.1).abs() <= 0.04, "d = {d}");
    }

    #[test]
    fn hausdorff_symmetry_and_triangle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b = unit_ball();
        let mk = |rng: &mut ChaCha8Rng| {
            let pts: Vec<Point> = (0..40)
                .map(|_| {
                    Point::new(
                        rng.gen_range(-0.8..0.8),
                        rng.gen_range(-0.8..0.8),
                        rng.gen_range(-0.8..0.8),
                    )
                })
                .collect();
            let n = pts.len();
            DiscreteSet::new(pts, vec![1.0; n], 0.05)
        };
        for _ in 0..20 {
            let e = mk(&mut rng);
            let f = mk(&mut rng);
            let g = mk(&mut rng);
            let def = hausdorff(&e, &f, &b).unwrap();
            let dfe = hausdorff(&f, &e, &b).unwrap();
            assert_relative_eq!(def, dfe, epsilon = 1e-12);
            let deg = hausdorff(&e, &g, &b).unwrap();
            let dgf = hausdorff(&g, &f, &b).unwrap();
            assert!(def <= deg + dgf + 2.0 * 0.05 / b.radius + 1e-12);
        }
    }

    #[test]
    fn fit_plane_to_plane_sample() {
        let z = MinimalCone::canonical(ConeKind::P);
        let b = unit_ball();
        let e = z.sample(&b, 0.05).unwrap();
        let fit = fit_cone(&e, &b, &[ConeKind::P], Point::origin(), &FitConfig::default())
            .unwrap();
        assert!(fit.beta <= 0.05, "beta = {}", fit.beta);
        assert_eq!(fit.cone.kind(), ConeKind::P);
    }

    #[test]
    fn fit_reports_empty_intersection() {
        let e = DiscreteSet::empty(0.1);
        let b = unit_ball();
        assert!(matches!(
            fit_cone(&e, &b, &[ConeKind::P], Point::origin(), &FitConfig::default()),
            Err(Error::EmptyIntersection(_))
        ));
    }

    #[test]
    fn plane_cannot_fit_tetrahedral_cone() {
        let z = MinimalCone::canonical(ConeKind::T);
        let b = unit_ball();
        let e = z.sample(&b, 0.05).unwrap();
        let fit = fit_cone(&e, &b, &[ConeKind::P], Point::origin(), &FitConfig::default())
            .unwrap();
        // Tight-frame bound: any plane through the apex misses some vertex
        // direction by at least 1/sqrt(3).
        assert!(fit.beta >= 0.2, "beta = {}", fit.beta);
    }

    #[test]
    fn fit_recovers_rotated_y() {
        let rot = Rotation::from_euler_angles(0.4, -0.8, 1.3);
        let z = MinimalCone::canonical(ConeKind::Y).transformed(&rot, &Vector::zeros());
        let b = unit_ball();
        let e = z.sample(&b, 0.05).unwrap();
        let fit = fit_cone(&e, &b, &ConeKind::ALL, Point::origin(), &FitConfig::default())
            .unwrap();
        assert_eq!(fit.cone.kind(), ConeKind::Y);
        assert!(fit.beta <= 2.0 * 0.05, "beta = {}", fit.beta);
    }

    #[test]
    fn fit_equivariance_on_exact_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let b = unit_ball();
        for kind in ConeKind::ALL {
            let z = MinimalCone::canonical(kind);
            let e = z.sample(&b, 0.08).unwrap();
            let fit0 = fit_cone(&e, &b, &[kind], Point::origin(), &FitConfig::default())
                .unwrap();
            let rot = Rotation::from_euler_angles(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let pts: Vec<Point> = e
                .points()
                .iter()
                .map(|p| rot.transform_point(p))
                .collect();
            let n = pts.len();
            let er = DiscreteSet::new(pts, vec![1.0; n], 0.08);
            let fit1 = fit_cone(&er, &b, &[kind], Point::origin(), &FitConfig::default())
                .unwrap();
            assert!(
                (fit0.beta - fit1.beta).abs() <= 1e-6,
                "{kind}: {} vs {}",
                fit0.beta,
                fit1.beta
            );
        }
    }

    #[test]
    fn separation_counts_match_kind() {
        for kind in ConeKind::ALL {
            let z = MinimalCone::canonical(kind);
            let b = unit_ball();
            let e = z.sample(&b.scaled(1.1), 0.04).unwrap();
            let rep = separating_check(&e, &b, &z, 5e-2).unwrap();
            assert!(rep.separating, "{kind} should separate");
            assert_eq!(rep.component_count, kind.region_count(), "{kind}");
        }
    }

    #[test]
    fn holed_plane_does_not_separate() {
        let z = MinimalCone::canonical(ConeKind::P);
        let b = unit_ball();
        let full = z.sample(&b.scaled(1.1), 0.04).unwrap();
        let hole = 0.2;
        let mut pts = Vec::new();
        let mut wts = Vec::new();
        for (p, w) in full.points().iter().zip(full.weights()) {
            if p.x * p.x + p.y * p.y > hole * hole {
                pts.push(*p);
                wts.push(*w);
            }
        }
        let e = DiscreteSet::new(pts, wts, 0.04);
        let rep = separating_check(&e, &b, &z, 5e-2).unwrap();
        assert!(!rep.separating);
    }

    #[test]
    fn separation_precondition_violation_is_distinct() {
        let z = MinimalCone::canonical(ConeKind::P);
        let b = unit_ball();
        let e = DiscreteSet::new(vec![Point::new(0.0, 0.0, 0.5)], vec![1.0], 0.04);
        assert!(matches!(
            separating_check(&e, &b, &z, 5e-2),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn discrete_area_disk_and_empty() {
        let z = MinimalCone::canonical(ConeKind::P);
        let b = unit_ball();
        let e = z.sample(&b.scaled(1.5), 0.03).unwrap();
        assert_relative_eq!(
            discrete_area(&e, &b),
            std::f64::consts::PI,
            max_relative = 0.02
        );
        assert_eq!(discrete_area(&DiscreteSet::empty(0.1), &b), 0.0);
        let y = MinimalCone::canonical(ConeKind::Y);
        let ey = y.sample(&b.scaled(1.5), 0.03).unwrap();
        assert_relative_eq!(
            discrete_area(&ey, &b),
            1.5 * std::f64::consts::PI,
            max_relative = 0.02
        );
    }

    #[test]
    fn excess_density_examples() {
        let p = MinimalCone::canonical(ConeKind::P);
        let b = unit_ball();
        let e = p.sample(&b.scaled(1.5), 0.03).unwrap();
        let f = excess_density(&e, &Point::origin(), 1.0, ConeKind::P);
        assert!(f.abs() <= 0.02 * std::f64::consts::PI, "f = {f}");

        let y = MinimalCone::canonical(ConeKind::Y);
        let ey = y.sample(&b.scaled(1.5), 0.03).unwrap();
        let fy = excess_density(&ey, &Point::origin(), 1.0, ConeKind::P);
        assert_relative_eq!(
            fy,
            0.5 * std::f64::consts::PI,
            max_relative = 0.05
        );
    }

    #[test]
    fn excess_density_additive_patch() {
        // Plane sample plus a spurious patch of known area inside the ball.
        let p = MinimalCone::canonical(ConeKind::P);
        let b = unit_ball();
        let mut e = p.sample(&b.scaled(1.5), 0.03).unwrap();
        let patch_area = 0.2;
        // Drop the patch as a handful of points carrying the extra weight,
        // placed well inside the ball.
        for i in 0..10 {
            e.push(
                Point::new(0.05 * i as f64 - 0.2, 0.1, 0.4),
                patch_area / 10.0,
            );
        }
        let f = excess_density(&e, &Point::origin(), 1.0, ConeKind::P);
        assert_relative_eq!(f, patch_area, max_relative = 0.12);
    }

    #[test]
    fn unilateral_bounded_by_hausdorff_to_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let b = unit_ball();
        for kind in ConeKind::ALL {
            let z = MinimalCone::canonical(kind);
            let s = 0.05;
            let zs = z.sample(&b.scaled(1.2), s).unwrap();
            for _ in 0..5 {
                let pts: Vec<Point> = (0..60)
                    .map(|_| {
                        let raw = Point::new(
                            rng.gen_range(-0.9..0.9),
                            rng.gen_range(-0.9..0.9),
                            rng.gen_range(-0.9..0.9),
                        );
                        let near = z.nearest(&raw);
                        near + (raw - near) * 0.05
                    })
                    .collect();
                let n = pts.len();
                let e = DiscreteSet::new(pts, vec![1.0; n], s);
                let beta = unilateral_distance(&e, &z, &b);
                if let Some(h) = hausdorff(&e, &zs, &b) {
                    assert!(beta <= h + s / b.radius + 1e-12);
                }
            }
        }
    }
}
