//! Multiscale machinery on a discrete pair `(u, K)`: normalized jump,
//! good/bad balls with stopping times, the Vitali family of bad balls and
//! its mass, the geometric function, competitor construction with level
//! surfaces, boundary walls, and the radius selection rule.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeKind, MinimalCone};
use crate::error::{Error, Result};
use crate::geometry::{Ball, Point, Vector};
use crate::grid::ScalarGrid;
use crate::metrics::{separating_check, ConeFit, FitConfig, SeparationReport};
use crate::sets::{DiscreteSet, VoxelIndex};

/// Knobs of the stopping-time machinery. The geometric and topological
/// stopping constants follow the discrete regime: the continuum analysis
/// would take them orders of magnitude smaller than any grid can resolve,
/// so they are resolution-scaled while keeping the ordering
/// `eps0_prime < eps0 < 1e-1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiscaleConfig {
    /// Cone-closeness stopping constant.
    pub eps0: f64,
    /// Separation-surplus stopping constant.
    pub eps0_prime: f64,
    /// Bad-ball inflation factor `A`.
    pub inflation: f64,
    /// Whitney kernel constant `U` (kernel radius is `10/U` of the local
    /// clearance).
    pub whitney_u: f64,
    /// Candidate levels scanned per sector pair in the competitor builder.
    pub level_candidates: usize,
    /// Cap on stopping-time candidate centers.
    pub max_stopping_candidates: usize,
}

impl Default for MultiscaleConfig {
    fn default() -> Self {
        Self {
            eps0: 5e-2,
            eps0_prime: 1e-2,
            inflation: 2.0,
            whitney_u: 40.0,
            level_candidates: 32,
            max_stopping_candidates: 800,
        }
    }
}

impl MultiscaleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps0_prime < self.eps0 && self.eps0 < 1e-1) {
            return Err(Error::InvalidParameter(format!(
                "stopping constants must satisfy eps0' < eps0 < 1e-1, got {} and {}",
                self.eps0_prime, self.eps0
            )));
        }
        if !(self.inflation >= 1.0) {
            return Err(Error::InvalidParameter(
                "bad-ball inflation must be at least 1".into(),
            ));
        }
        if !(self.whitney_u > 30.0) {
            return Err(Error::InvalidParameter(
                "whitney constant U must exceed 30".into(),
            ));
        }
        Ok(())
    }
}

/// Normalized jump of `u` in a ball, relative to a fitted cone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpReport {
    pub ball: Ball,
    pub cone: MinimalCone,
    /// Reference balls `D_k`, one per visible sector, radius `r/10`.
    pub domains: Vec<Ball>,
    /// Analytic sector index of each domain.
    pub sector_ids: Vec<usize>,
    /// Mean of `u` over each `D_k`.
    pub means: Vec<f64>,
    /// `delta_{k,l} = |m_k - m_l|` for every pair.
    pub deltas: Vec<(usize, usize, f64)>,
    /// `r^{-1/2} min delta`.
    pub j: f64,
    /// Set when the fitted cone was not almost centered and the jump was
    /// taken in `B(x, 2r)` or `B(x, 4r)` instead.
    pub centered_fallback: Option<f64>,
}

/// Normalized jump: labels the tube-complement sectors of the fitted cone
/// in the ball, drops one reference ball `D_k` of radius `r/10` at the
/// deepest cell of each sector, and returns `r^{-1/2}` times the smallest
/// contrast between sector means. If the cone apex misses `(1/2)B`, the
/// first of `B(x, 2r)` / `B(x, 4r)` with an almost-centered cone is used.
pub fn jump(
    u: &ScalarGrid,
    v: Option<&ScalarGrid>,
    k: &DiscreteSet,
    fit: &ConeFit,
    b: &Ball,
    eps0: f64,
) -> Result<JumpReport> {
    if fit.beta > 1e-1 {
        return Err(Error::Precondition(format!(
            "jump requires beta <= 1e-1, got {}",
            fit.beta
        )));
    }
    let cone = &fit.cone;
    let mut ball_used = *b;
    let mut fallback = None;
    if (cone.apex() - b.center).norm() > 0.5 * b.radius {
        let mut found = false;
        for s in [2.0, 4.0] {
            let cand = b.scaled(s);
            if (cone.apex() - b.center).norm() <= 0.5 * cand.radius && u.contains_ball(&cand)
            {
                ball_used = cand;
                fallback = Some(s);
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::JumpUndefined(
                "cone not almost centered and no usable fallback ball".into(),
            ));
        }
    }
    let r = ball_used.radius;
    let sectors = cone.kind().region_count();
    // Broken-material mask: reference domains and their means stay clear
    // of the crack band.
    let kindex = (!k.is_empty()).then(|| VoxelIndex::build(k));
    let guard = 1.5 * k.spacing().max(u.spacing);
    let intact = |lin: usize, p: &Point| -> bool {
        if let Some(vg) = v {
            if vg.values[lin] < 0.8 {
                return false;
            }
        }
        if let Some(idx) = &kindex {
            if idx.any_within(p, guard) {
                return false;
            }
        }
        true
    };
    // Deepest intact cell per sector (lexicographic tie-break via scan
    // order).
    let mut deepest: Vec<Option<(f64, Point)>> = vec![None; sectors];
    for_cells_in_ball(u, &ball_used, |lin, p| {
        let d = cone.distance(&p);
        if d > eps0 * r && intact(lin, &p) {
            let s = cone.sector_label(&p);
            if deepest[s].map_or(true, |(bd, _)| d > bd) {
                deepest[s] = Some((d, p));
            }
        }
    });
    let mut domains = Vec::new();
    let mut sector_ids = Vec::new();
    for (s, slot) in deepest.iter().enumerate() {
        if let Some((_, p)) = slot {
            domains.push(Ball {
                center: *p,
                radius: r / 10.0,
            });
            sector_ids.push(s);
        }
    }
    if domains.len() < 2 {
        return Err(Error::JumpUndefined(format!(
            "only {} sector(s) visible in the ball",
            domains.len()
        )));
    }
    let means: Vec<f64> = domains
        .iter()
        .map(|d| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for_cells_in_ball(u, d, |lin, p| {
                if intact(lin, &p) {
                    sum += u.values[lin];
                    count += 1;
                }
            });
            if count == 0 {
                // The domain center is a cell center, so this cannot
                // trigger; keep the value defined regardless.
                u.value_at(&d.center).unwrap_or(0.0)
            } else {
                sum / count as f64
            }
        })
        .collect();
    let mut deltas = Vec::new();
    let mut min_delta = f64::INFINITY;
    for a in 0..means.len() {
        for bidx in (a + 1)..means.len() {
            let d = (means[a] - means[bidx]).abs();
            deltas.push((sector_ids[a], sector_ids[bidx], d));
            min_delta = min_delta.min(d);
        }
    }
    Ok(JumpReport {
        ball: ball_used,
        cone: cone.clone(),
        domains,
        sector_ids,
        means,
        deltas,
        j: min_delta / r.sqrt(),
        centered_fallback: fallback,
    })
}

/// Visit every grid cell whose center lies in the ball (clipped to the
/// grid box).
fn for_cells_in_ball(u: &ScalarGrid, b: &Ball, mut f: impl FnMut(usize, Point)) {
    let h = u.spacing;
    let lo = b.center - Vector::new(b.radius, b.radius, b.radius);
    let hi = b.center + Vector::new(b.radius, b.radius, b.radius);
    let clamp = |x: f64, n: usize| (x.max(0.0) as usize).min(n - 1);
    let rel = |x: f64, o: f64| (x - o) / h - 0.5;
    let i0 = clamp(rel(lo.x, u.origin.x).floor(), u.dims[0]);
    let i1 = clamp(rel(hi.x, u.origin.x).ceil(), u.dims[0]);
    let j0 = clamp(rel(lo.y, u.origin.y).floor(), u.dims[1]);
    let j1 = clamp(rel(hi.y, u.origin.y).ceil(), u.dims[1]);
    let k0 = clamp(rel(lo.z, u.origin.z).floor(), u.dims[2]);
    let k1 = clamp(rel(hi.z, u.origin.z).ceil(), u.dims[2]);
    let r2 = b.radius * b.radius;
    for k in k0..=k1 {
        for j in j0..=j1 {
            for i in i0..=i1 {
                let p = u.cell_center(i, j, k);
                if (p - b.center).norm_squared() <= r2 {
                    f(u.idx(i, j, k), p);
                }
            }
        }
    }
}

/// Cheap-first beta evaluation for the stopping machinery: a global hint
/// cone, then a local PCA plane, then a reduced full fit.
pub struct ConeCloseness<'a> {
    k: &'a DiscreteSet,
    index: VoxelIndex<'a>,
    hint: Option<MinimalCone>,
    fit_cfg: FitConfig,
}

impl<'a> ConeCloseness<'a> {
    pub fn new(k: &'a DiscreteSet, hint: Option<MinimalCone>) -> Self {
        Self {
            k,
            index: VoxelIndex::build(k),
            hint,
            fit_cfg: FitConfig {
                orientations: 96,
                refine_top: 1,
                coarse_points: 300,
                refine_rounds: 18,
            },
        }
    }

    pub fn set(&self) -> &DiscreteSet {
        self.k
    }

    pub fn distance_to_set(&self, p: &Point) -> Option<f64> {
        self.index.nearest(p)
    }

    fn in_ball_points(&self, b: &Ball) -> Vec<Point> {
        self.k
            .indices_in_ball(b)
            .into_iter()
            .map(|i| self.k.points()[i])
            .collect()
    }

    /// Best beta witness found: `(beta, cone)`; `None` when the ball holds
    /// no sample points.
    pub fn beta_witness(&self, b: &Ball, eps0: f64) -> Option<(f64, MinimalCone)> {
        let pts = self.in_ball_points(b);
        if pts.is_empty() {
            return None;
        }
        let r = b.radius;
        let mut best: Option<(f64, MinimalCone)> = None;
        if let Some(hint) = &self.hint {
            let sup = pts.iter().map(|p| hint.distance(p)).fold(0.0, f64::max);
            best = Some((sup / r, hint.clone()));
            if sup / r <= eps0 {
                return best;
            }
        }
        // Local plane from the second moments.
        if let Some(plane) = pca_plane(&pts) {
            let sup = pts.iter().map(|p| plane.distance(p)).fold(0.0, f64::max);
            if best.as_ref().map_or(true, |(bb, _)| sup / r < *bb) {
                best = Some((sup / r, plane));
            }
            if best.as_ref().unwrap().0 <= eps0 {
                return best;
            }
        }
        // Reduced full fit over all kinds through the ball center, stopped
        // as soon as the good threshold is certified.
        let tmp = DiscreteSet::new(pts.clone(), vec![1.0; pts.len()], self.k.spacing());
        if let Ok(fit) =
            crate::metrics::fit_cone_stop_early(&tmp, b, &ConeKind::ALL, b.center, &self.fit_cfg, eps0)
        {
            if best.as_ref().map_or(true, |(bb, _)| fit.beta < *bb) {
                best = Some((fit.beta, fit.cone));
            }
        }
        best
    }
}

fn pca_plane(pts: &[Point]) -> Option<MinimalCone> {
    if pts.len() < 4 {
        return None;
    }
    let n = pts.len() as f64;
    let mut mean = Vector::zeros();
    for p in pts {
        mean += p.coords;
    }
    mean /= n;
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for p in pts {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut min_i = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_i] {
            min_i = i;
        }
    }
    let normal = eig.eigenvectors.column(min_i).into_owned();
    Some(MinimalCone::plane(Point::from(mean), &normal))
}

/// Which clause failed in a good-ball test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BadReason {
    Surplus,
    ConeDistance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoodBallWitness {
    pub good: bool,
    pub beta: Option<f64>,
    pub cone: Option<MinimalCone>,
    pub surplus: f64,
    pub failing: Option<BadReason>,
}

/// Good ball test: the separation surplus must stay below
/// `eps0' r^2` and some minimal cone must be within `eps0 r` of every
/// sample point in the ball.
pub fn good_ball(
    closeness: &ConeCloseness,
    surplus: &dyn Fn(&Ball) -> f64,
    b: &Ball,
    eps0: f64,
    eps0_prime: f64,
) -> GoodBallWitness {
    let s = surplus(b);
    if s > eps0_prime * b.radius * b.radius {
        return GoodBallWitness {
            good: false,
            beta: None,
            cone: None,
            surplus: s,
            failing: Some(BadReason::Surplus),
        };
    }
    match closeness.beta_witness(b, eps0) {
        None => GoodBallWitness {
            good: true,
            beta: Some(0.0),
            cone: None,
            surplus: s,
            failing: None,
        },
        Some((beta, cone)) => {
            let good = beta <= eps0;
            GoodBallWitness {
                good,
                beta: Some(beta),
                cone: Some(cone),
                surplus: s,
                failing: (!good).then_some(BadReason::ConeDistance),
            }
        }
    }
}

/// Ladder-quantized stopping time: the largest dyadic radius in
/// `[2 spacing, r_max]` whose ball is bad; 0 when every tested ball is
/// good.
pub fn stopping_time(
    closeness: &ConeCloseness,
    surplus: &dyn Fn(&Ball) -> f64,
    x: &Point,
    eps0: f64,
    eps0_prime: f64,
    r_max: f64,
) -> Result<f64> {
    match closeness.distance_to_set(x) {
        Some(d) if d <= r_max => {}
        _ => {
            return Err(Error::Precondition(
                "stopping_time: point has no sample within r_max".into(),
            ))
        }
    }
    let floor = 2.0 * closeness.set().spacing();
    let mut worst_bad = 0.0_f64;
    let mut r = r_max;
    while r >= floor {
        let ball = Ball { center: *x, radius: r };
        let witness = good_ball(closeness, surplus, &ball, eps0, eps0_prime);
        if !witness.good && r > worst_bad {
            worst_bad = r;
        }
        r *= 0.5;
    }
    Ok(worst_bad)
}

/// The Vitali family of inflated bad balls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingDecomposition {
    pub eps0: f64,
    pub eps0_prime: f64,
    pub inflation: f64,
    /// Pairwise disjoint balls `B(x_i, A d(x_i))`.
    pub balls: Vec<Ball>,
    /// Stopping radii `d(x_i)` of the kept balls.
    pub stopping_radii: Vec<f64>,
    /// Whether the 5-times dilates cover every candidate with positive
    /// stopping time.
    pub covered: bool,
}

impl StoppingDecomposition {
    pub fn empty(cfg: &MultiscaleConfig) -> Self {
        Self {
            eps0: cfg.eps0,
            eps0_prime: cfg.eps0_prime,
            inflation: cfg.inflation,
            balls: Vec::new(),
            stopping_radii: Vec::new(),
            covered: true,
        }
    }

    pub fn max_radius(&self) -> f64 {
        self.balls.iter().map(|b| b.radius).fold(0.0, f64::max)
    }
}

/// Stopping times at the sample points of `K` inside `region`, followed by
/// greedy Vitali selection (radius-descending, lexicographic tie-break) of
/// the inflated balls.
pub fn bad_balls(
    closeness: &ConeCloseness,
    surplus: &(dyn Fn(&Ball) -> f64 + Sync),
    region: &Ball,
    r_max: f64,
    cfg: &MultiscaleConfig,
) -> Result<StoppingDecomposition> {
    cfg.validate()?;
    let k = closeness.set();
    let idx = k.indices_in_ball(region);
    let stride = (idx.len() / cfg.max_stopping_candidates).max(1);
    let candidates: Vec<Point> = idx
        .iter()
        .step_by(stride)
        .map(|&i| k.points()[i])
        .collect();
    let times: Vec<f64> = candidates
        .par_iter()
        .map(|x| {
            stopping_time(closeness, surplus, x, cfg.eps0, cfg.eps0_prime, r_max)
                .unwrap_or(0.0)
        })
        .collect();
    let mut cand_balls: Vec<(Ball, f64)> = candidates
        .iter()
        .zip(&times)
        .filter(|(_, &d)| d > 0.0)
        .map(|(x, &d)| {
            (
                Ball {
                    center: *x,
                    radius: cfg.inflation * d,
                },
                d,
            )
        })
        .collect();
    cand_balls.sort_by(|a, b| {
        b.0.radius
            .total_cmp(&a.0.radius)
            .then(a.0.center.x.total_cmp(&b.0.center.x))
            .then(a.0.center.y.total_cmp(&b.0.center.y))
            .then(a.0.center.z.total_cmp(&b.0.center.z))
    });
    let mut kept: Vec<Ball> = Vec::new();
    let mut kept_d: Vec<f64> = Vec::new();
    for (ball, d) in cand_balls.iter() {
        if kept.iter().all(|k| !k.intersects(ball)) {
            kept.push(*ball);
            kept_d.push(*d);
        }
    }
    let covered = cand_balls.iter().all(|(ball, _)| {
        kept.iter().any(|k| {
            (ball.center - k.center).norm() <= 5.0 * k.radius
        })
    });
    Ok(StoppingDecomposition {
        eps0: cfg.eps0,
        eps0_prime: cfg.eps0_prime,
        inflation: cfg.inflation,
        balls: kept,
        stopping_radii: kept_d,
        covered,
    })
}

/// Bad mass `m(x, r) = r^{-2} sum of r_i^2` over the family members that
/// meet the ball.
pub fn bad_mass(s: &StoppingDecomposition, b: &Ball) -> f64 {
    let mut sum = 0.0;
    for ball in &s.balls {
        if ball.intersects(b) {
            sum += ball.radius * ball.radius;
        }
    }
    sum / (b.radius * b.radius)
}

/// Geometric function `delta(x) = inf_B (d(x, B) + r_B)`; infinite for an
/// empty family.
pub fn geometric_function(s: &StoppingDecomposition, x: &Point) -> f64 {
    s.balls
        .iter()
        .map(|b| b.distance(x) + b.radius)
        .fold(f64::INFINITY, f64::min)
}

/// Pick `rho` in `[r0/2, 3 r0/4]` minimizing the squared radii of family
/// members crossing the sphere `partial B(center, rho)`; scans 64 radii,
/// ties keep the smallest.
pub fn choose_radius_rho(s: &StoppingDecomposition, center: &Point, r0: f64) -> f64 {
    let n = 64;
    let mut best_rho = 0.5 * r0;
    let mut best_cost = f64::INFINITY;
    let mut total = 0.0;
    for i in 0..n {
        let rho = 0.5 * r0 + 0.25 * r0 * (i as f64 / (n - 1) as f64);
        let mut cost = 0.0;
        for ball in &s.balls {
            let d = (ball.center - center).norm();
            if (d - rho).abs() <= ball.radius {
                cost += ball.radius * ball.radius;
            }
        }
        total += cost;
        if cost < best_cost {
            best_cost = cost;
            best_rho = rho;
        }
    }
    debug_assert!(best_cost <= total / n as f64 + 1e-12);
    best_rho
}

/// Area of the boundary wall `{y on partial B : d(y, Z) <= beta r}` by a
/// deterministic spherical Fibonacci quadrature.
pub fn boundary_wall(b: &Ball, z: &MinimalCone, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 0.1) {
        return Err(Error::Precondition(format!(
            "boundary_wall requires 0 < beta < 0.1, got {beta}"
        )));
    }
    let n = 200_000usize;
    let r = b.radius;
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let hits: usize = (0..n)
        .into_par_iter()
        .map(|i| {
            let zc = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - zc * zc).sqrt();
            let phi = golden * i as f64;
            let p = b.center
                + Vector::new(r * rho * phi.cos(), r * rho * phi.sin(), r * zc);
            usize::from(z.distance(&p) <= beta * r)
        })
        .sum();
    Ok(4.0 * std::f64::consts::PI * r * r * hits as f64 / n as f64)
}

/// Competitor set `F = K cup (level surfaces)` together with its
/// separation and star reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompetitorSet {
    pub f: DiscreteSet,
    /// The extra part `F \ K` (points farther than one spacing from `K`).
    pub extra: DiscreteSet,
    pub levels: Vec<f64>,
    pub area_surplus: f64,
    pub separation: SeparationReport,
    pub jump: JumpReport,
    pub star: PropertyStarReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyStarReport {
    pub sites: usize,
    pub admissible_scales: usize,
    pub violations: usize,
    pub pass: bool,
}

/// Build the separating competitor: sector cutoffs of `u` toward the
/// sector means, a Whitney-style distance-weighted smoothing, one level
/// per sector pair from the middle tenth of the mean interval (area
/// minimized over candidates), and the union with `K`.
pub fn build_competitor(
    u: &ScalarGrid,
    k: &DiscreteSet,
    b: &Ball,
    fit: &ConeFit,
    cfg: &MultiscaleConfig,
) -> Result<CompetitorSet> {
    cfg.validate()?;
    if fit.beta > 1e-2 {
        return Err(Error::Precondition(format!(
            "build_competitor requires beta <= 1e-2, got {}",
            fit.beta
        )));
    }
    let jr = jump(u, None, k, fit, b, cfg.eps0)?;
    if !(jr.j > 0.0) {
        return Err(Error::Precondition(
            "build_competitor requires a positive jump".into(),
        ));
    }
    let cone = &fit.cone;
    let r = b.radius;
    let hw = k.spacing().max(2.0 * r / 96.0);
    let n = (2.0 * r / hw).ceil() as usize + 1;
    let origin = b.center - Vector::new(r, r, r);
    let at = |i: usize, j: usize, kk: usize| i + n * (j + n * kk);
    let center_of = |i: usize, j: usize, kk: usize| -> Point {
        origin
            + Vector::new(
                (i as f64 + 0.5) * hw,
                (j as f64 + 0.5) * hw,
                (kk as f64 + 0.5) * hw,
            )
    };
    let kindex = VoxelIndex::build(k);

    // Sector means keyed by sector id.
    let sectors = cone.kind().region_count();
    let mut sector_mean = vec![f64::NAN; sectors];
    for (ball_d, m) in jr.domains.iter().zip(&jr.means) {
        sector_mean[cone.sector_label(&ball_d.center)] = *m;
    }

    // Cutoff field v on the working raster.
    let total = n * n * n;
    let mut vfield = vec![f64::NAN; total];
    let mut inside = vec![false; total];
    let mut dist_k = vec![f64::INFINITY; total];
    let mut dist_z = vec![f64::INFINITY; total];
    let cells: Vec<(usize, f64, f64, f64)> = (0..total)
        .into_par_iter()
        .filter_map(|lin| {
            let i = lin % n;
            let j = (lin / n) % n;
            let kk = lin / (n * n);
            let p = center_of(i, j, kk);
            if !b.contains(&p) {
                return None;
            }
            let dz = cone.distance(&p);
            // The exact clearance to K only matters near the tube (kernel
            // radii and surplus classification); far cells never use it.
            let dk = if dz > 0.25 * r {
                f64::INFINITY
            } else {
                kindex.nearest(&p).unwrap_or(f64::INFINITY)
            };
            let s = cone.sector_label(&p);
            let v = if dz > r / 10.0 && sector_mean[s].is_finite() {
                sector_mean[s]
            } else {
                u.value_at(&p).unwrap_or_else(|| {
                    if sector_mean[s].is_finite() {
                        sector_mean[s]
                    } else {
                        0.0
                    }
                })
            };
            Some((lin, v, dk, dz))
        })
        .collect();
    for (lin, v, dk, dz) in cells {
        vfield[lin] = v;
        inside[lin] = true;
        dist_k[lin] = dk;
        dist_z[lin] = dz;
    }

    // Whitney-style smoothing near the tube: kernel radius 10/U of the
    // clearance to K and the ball boundary.
    let kernel_c = 10.0 / cfg.whitney_u;
    let wfield: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|lin| {
            if !inside[lin] {
                return f64::NAN;
            }
            if dist_z[lin] > r / 5.0 {
                return vfield[lin];
            }
            let i = lin % n;
            let j = (lin / n) % n;
            let kk = lin / (n * n);
            let p = center_of(i, j, kk);
            let clearance = dist_k[lin].min(r - (p - b.center).norm());
            let rho = (kernel_c * clearance).clamp(hw, r / 10.0);
            let reach = (rho / hw).ceil() as i64;
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for dk_ in -reach..=reach {
                for dj in -reach..=reach {
                    for di in -reach..=reach {
                        let ii = i as i64 + di;
                        let jj = j as i64 + dj;
                        let kk2 = kk as i64 + dk_;
                        if ii < 0 || jj < 0 || kk2 < 0 {
                            continue;
                        }
                        let (ii, jj, kk2) = (ii as usize, jj as usize, kk2 as usize);
                        if ii >= n || jj >= n || kk2 >= n {
                            continue;
                        }
                        let l2 = at(ii, jj, kk2);
                        if !inside[l2] {
                            continue;
                        }
                        let q = center_of(ii, jj, kk2);
                        let d = (q - p).norm();
                        if d <= rho {
                            let wgt = 1.0 - d / rho;
                            acc += wgt * vfield[l2];
                            wsum += wgt;
                        }
                    }
                }
            }
            if wsum > 0.0 {
                acc / wsum
            } else {
                vfield[lin]
            }
        })
        .collect();

    // Level-surface area estimate for a candidate level.
    let level_area = |t: f64| -> f64 {
        let mut area = 0.0;
        for lin in 0..total {
            if !inside[lin] || dist_k[lin] <= hw {
                continue;
            }
            let i = lin % n;
            let j = (lin / n) % n;
            let kk = lin / (n * n);
            let wc = wfield[lin];
            let grad = raster_gradient(&wfield, &inside, n, lin, hw);
            let gn = grad.norm();
            for (axis, (ni, nj, nk)) in
                [(0, (i + 1, j, kk)), (1, (i, j + 1, kk)), (2, (i, j, kk + 1))]
            {
                if ni >= n || nj >= n || nk >= n {
                    continue;
                }
                let l2 = at(ni, nj, nk);
                if !inside[l2] || dist_k[l2] <= hw {
                    continue;
                }
                let wn = wfield[l2];
                if (wc - t) * (wn - t) < 0.0 {
                    let na = if gn > 1e-12 {
                        (grad[axis] / gn).abs()
                    } else {
                        1.0
                    };
                    area += hw * hw * na;
                }
            }
        }
        area
    };

    // One level per sector pair, chosen from the middle tenth of the mean
    // interval by discrete area minimization.
    let mut levels = Vec::new();
    for a in 0..jr.means.len() {
        for bb in (a + 1)..jr.means.len() {
            let m0 = jr.means[a];
            let m1 = jr.means[bb];
            if (m0 - m1).abs() == 0.0 {
                continue;
            }
            let mid = 0.5 * (m0 + m1);
            let span = (m1 - m0).abs();
            let lo = mid - span / 20.0;
            let hi = mid + span / 20.0;
            let mut best_t = mid;
            let mut best_area = f64::INFINITY;
            for q in 0..cfg.level_candidates {
                let t = lo + (hi - lo) * (q as f64 + 0.5) / cfg.level_candidates as f64;
                let area = level_area(t);
                if area < best_area {
                    best_area = area;
                    best_t = t;
                }
            }
            levels.push(best_t);
        }
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    // Gamma points: crossing midpoints with axis-projected area weights.
    let mut f_set = k.clone();
    let mut extra = DiscreteSet::empty(hw.max(k.spacing()));
    let mut surplus = 0.0;
    for &t in &levels {
        for lin in 0..total {
            if !inside[lin] {
                continue;
            }
            let i = lin % n;
            let j = (lin / n) % n;
            let kk = lin / (n * n);
            let wc = wfield[lin];
            let grad = raster_gradient(&wfield, &inside, n, lin, hw);
            let gn = grad.norm();
            for (axis, (ni, nj, nk)) in
                [(0, (i + 1, j, kk)), (1, (i, j + 1, kk)), (2, (i, j, kk + 1))]
            {
                if ni >= n || nj >= n || nk >= n {
                    continue;
                }
                let l2 = at(ni, nj, nk);
                if !inside[l2] {
                    continue;
                }
                let wn = wfield[l2];
                if (wc - t) * (wn - t) < 0.0 {
                    let frac = (t - wc) / (wn - wc);
                    let mut p = center_of(i, j, kk);
                    p[axis] += frac * hw;
                    let na = if gn > 1e-12 {
                        (grad[axis] / gn).abs()
                    } else {
                        1.0
                    };
                    let wgt = hw * hw * na;
                    // Crossings within one spacing of K re-trace surface
                    // already carried by K; only genuinely new sheet
                    // enters F.
                    let dk = kindex.nearest(&p).unwrap_or(f64::INFINITY);
                    if dk > k.spacing() {
                        f_set.push(p, wgt);
                        extra.push(p, wgt);
                        surplus += wgt;
                    }
                }
            }
        }
    }

    let separation = separating_check(&f_set, b, cone, cfg.eps0)?;
    if !separation.separating {
        return Err(Error::SeparationUnachievable(
            "competitor level surfaces do not separate the sectors".into(),
        ));
    }

    let star = property_star_check(k, &f_set, b, cone, cfg.eps0);

    Ok(CompetitorSet {
        f: f_set,
        extra,
        levels,
        area_surplus: surplus,
        separation,
        jump: jr,
        star,
    })
}

fn raster_gradient(w: &[f64], inside: &[bool], n: usize, lin: usize, h: f64) -> Vector {
    let i = lin % n;
    let j = (lin / n) % n;
    let k = lin / (n * n);
    let at = |i: usize, j: usize, k: usize| i + n * (j + n * k);
    let axis_grad = |lo: Option<usize>, hi: Option<usize>, c: usize| -> f64 {
        let vlo = lo.filter(|&l| inside[l]).map(|l| w[l]);
        let vhi = hi.filter(|&l| inside[l]).map(|l| w[l]);
        match (vlo, vhi) {
            (Some(a), Some(b)) => (b - a) / (2.0 * h),
            (Some(a), None) => (w[c] - a) / h,
            (None, Some(b)) => (b - w[c]) / h,
            (None, None) => 0.0,
        }
    };
    let gx = axis_grad(
        (i > 0).then(|| at(i - 1, j, k)),
        (i + 1 < n).then(|| at(i + 1, j, k)),
        lin,
    );
    let gy = axis_grad(
        (j > 0).then(|| at(i, j - 1, k)),
        (j + 1 < n).then(|| at(i, j + 1, k)),
        lin,
    );
    let gz = axis_grad(
        (k > 0).then(|| at(i, j, k - 1)),
        (k + 1 < n).then(|| at(i, j, k + 1)),
        lin,
    );
    Vector::new(gx, gy, gz)
}

/// Ladder check of the star property: at sites where `K` stays cone-close
/// down to some scale, `F` must be cone-close at the scales below the
/// boundary clearance.
fn property_star_check(
    k: &DiscreteSet,
    f: &DiscreteSet,
    b: &Ball,
    cone: &MinimalCone,
    eps0: f64,
) -> PropertyStarReport {
    let k_closeness = ConeCloseness::new(k, Some(cone.clone()));
    let f_closeness = ConeCloseness::new(f, Some(cone.clone()));
    let idx = k.indices_in_ball(b);
    let stride = (idx.len() / 60).max(1);
    let mut sites = 0usize;
    let mut admissible = 0usize;
    let mut violations = 0usize;
    for &i in idx.iter().step_by(stride) {
        let y = k.points()[i];
        let clearance = b.radius - (y - b.center).norm();
        let floor = 4.0 * k.spacing();
        if clearance < floor {
            continue;
        }
        sites += 1;
        // Stopping level of K at this site.
        let mut scales = Vec::new();
        let mut s = clearance;
        while s >= floor {
            scales.push(s);
            s *= 0.5;
        }
        let mut stop = f64::INFINITY;
        for &t in &scales {
            let ball = Ball { center: y, radius: t };
            match k_closeness.beta_witness(&ball, eps0) {
                Some((beta, _)) if beta <= eps0 => {
                    stop = t;
                }
                Some(_) => break,
                None => {
                    stop = t;
                }
            }
        }
        for &t in &scales {
            if t >= stop {
                admissible += 1;
                let ball = Ball { center: y, radius: t };
                if let Some((beta_f, _)) = f_closeness.beta_witness(&ball, eps0) {
                    if beta_f > eps0 {
                        violations += 1;
                    }
                }
            }
        }
    }
    PropertyStarReport {
        sites,
        admissible_scales: admissible,
        violations,
        pass: violations == 0,
    }
}
