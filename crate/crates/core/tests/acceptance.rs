//! Acceptance suite: one test per headline criterion, each printing a
//! pass/fail line (run with `--nocapture` to see them on success).

use std::time::Instant;

use mslab_core::cone::{ConeKind, MinimalCone, D_PLUS};
use mslab_core::decay::fit_beta_exponent;
use mslab_core::geometry::{Ball, Point};
use mslab_core::lab::{
    analyze_scene, compare_baseline, prepare_scene, reference_corpus, summarize, Baseline,
    LabConfig,
};
use mslab_core::metrics::{fit_cone, separating_check, FitConfig};
use mslab_core::multiscale::{
    bad_balls, build_competitor, ConeCloseness, MultiscaleConfig,
};
use mslab_core::scene::{synthetic_state, SceneKind, SceneSpec, SyntheticVariant};
use mslab_core::sets::DiscreteSet;
use mslab_core::solver::at_minimize;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn report(name: &str, pass: bool, detail: &str, secs: f64) {
    eprintln!(
        "[{}] {name}: {detail} ({secs:.1}s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{name}: {detail}");
}

fn unit_ball() -> Ball {
    Ball {
        center: Point::origin(),
        radius: 1.0,
    }
}

/// Monte Carlo oracle for the apex-centered unit-ball area of a canonical
/// cone: rejection sampling on each planar face.
fn mc_cone_area(kind: ConeKind, samples_per_face: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        ConeKind::P => {
            // One full plane: disk of radius 1 inside [-1,1]^2.
            let mut hits = 0usize;
            for _ in 0..samples_per_face {
                let a = rng.gen_range(-1.0..1.0);
                let b = rng.gen_range(-1.0..1.0);
                if a * a + b * b <= 1.0 {
                    hits += 1;
                }
            }
            hits as f64 / samples_per_face as f64 * 4.0
        }
        ConeKind::Y => {
            // Three half-planes: half-disk each.
            let mut total = 0.0;
            for _ in 0..3 {
                let mut hits = 0usize;
                for _ in 0..samples_per_face {
                    let a = rng.gen_range(0.0..1.0);
                    let b = rng.gen_range(-1.0..1.0);
                    if a * a + b * b <= 1.0 {
                        hits += 1;
                    }
                }
                total += hits as f64 / samples_per_face as f64 * 2.0;
            }
            total
        }
        ConeKind::T => {
            // Six wedges of opening angle acos(-1/3).
            let theta = (-1.0_f64 / 3.0).acos();
            let mut total = 0.0;
            for _ in 0..6 {
                let mut hits = 0usize;
                for _ in 0..samples_per_face {
                    let a = rng.gen_range(-1.0..1.0);
                    let b = rng.gen_range(0.0..1.0);
                    let in_disk = a * a + b * b <= 1.0;
                    let in_wedge = a * theta.sin() - b * theta.cos() >= 0.0;
                    if in_disk && in_wedge {
                        hits += 1;
                    }
                }
                total += hits as f64 / samples_per_face as f64 * 2.0;
            }
            total
        }
    }
}

#[test]
fn acceptance_01_cone_densities() {
    let t = Instant::now();
    let b = unit_ball();
    let mut detail = String::new();
    let mut pass = true;
    // 10^7 Monte Carlo samples split over the faces of each cone.
    let expected = [
        (ConeKind::P, std::f64::consts::PI, 10_000_000usize),
        (ConeKind::Y, 1.5 * std::f64::consts::PI, 3_333_334),
        (ConeKind::T, D_PLUS, 1_666_667),
    ];
    for (kind, reference, n) in expected {
        let area = MinimalCone::canonical(kind).ball_area(&b);
        let oracle = mc_cone_area(kind, n, 42);
        let vs_ref = (area - reference).abs() / reference;
        let vs_mc = (area - oracle).abs() / oracle;
        detail.push_str(&format!("{kind}: area={area:.6} mc={oracle:.6} "));
        pass &= vs_ref <= 5e-3 && vs_mc <= 5e-3;
    }
    let secs = t.elapsed().as_secs_f64();
    let within_budget = secs < 10.0;
    detail.push_str(&format!("budget<10s: {within_budget}"));
    report("cone densities", pass && within_budget, &detail, secs);
}

#[test]
fn acceptance_02_beta_fidelity() {
    let t = Instant::now();
    let b = unit_ball();
    let cfg = FitConfig::default();
    let mut pass = true;
    let mut detail = String::new();
    for kind in ConeKind::ALL {
        let sample = MinimalCone::canonical(kind).sample(&b, 0.02).unwrap();
        let fit = fit_cone(&sample, &b, &ConeKind::ALL, Point::origin(), &cfg).unwrap();
        detail.push_str(&format!("{kind}->{} beta={:.4} ", fit.cone.kind(), fit.beta));
        pass &= fit.cone.kind() == kind && fit.beta <= 0.04;
    }
    // A plane cannot unilaterally approximate the tetrahedral cone.
    let t_sample = MinimalCone::canonical(ConeKind::T).sample(&b, 0.02).unwrap();
    let plane_fit = fit_cone(&t_sample, &b, &[ConeKind::P], Point::origin(), &cfg).unwrap();
    detail.push_str(&format!("plane-to-T beta={:.3} ", plane_fit.beta));
    pass &= plane_fit.beta >= 0.2;
    let secs = t.elapsed().as_secs_f64();
    let within_budget = secs < 60.0;
    detail.push_str(&format!("budget<60s: {within_budget}"));
    report("beta fidelity", pass && within_budget, &detail, secs);
}

#[test]
fn acceptance_03_separation() {
    let t = Instant::now();
    let b = unit_ball();
    let mut pass = true;
    let mut detail = String::new();
    for kind in ConeKind::ALL {
        let z = MinimalCone::canonical(kind);
        let sample = z.sample(&b.scaled(1.1), 0.03).unwrap();
        let rep = separating_check(&sample, &b, &z, 5e-2).unwrap();
        detail.push_str(&format!("{kind}: k={} sep={} ", rep.component_count, rep.separating));
        pass &= rep.separating && rep.component_count == kind.region_count();
    }
    // Removing a disk of radius 0.2 r flips the plane case.
    let z = MinimalCone::canonical(ConeKind::P);
    let full = z.sample(&b.scaled(1.1), 0.03).unwrap();
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    for (p, w) in full.points().iter().zip(full.weights()) {
        if p.x * p.x + p.y * p.y > 0.04 {
            pts.push(*p);
            wts.push(*w);
        }
    }
    let holed = DiscreteSet::new(pts, wts, 0.03);
    let rep = separating_check(&holed, &b, &z, 5e-2).unwrap();
    detail.push_str(&format!("holed sep={} ", rep.separating));
    pass &= !rep.separating;
    let secs = t.elapsed().as_secs_f64();
    let within_budget = secs < 30.0;
    detail.push_str(&format!("budget<30s: {within_budget}"));
    report("separation", pass && within_budget, &detail, secs);
}

/// One-dimensional alternate minimization with the same discretization,
/// solved by direct tridiagonal elimination: the independent profile
/// oracle.
fn solve_1d(g: &[f64], h: f64, eps: f64, lambda: f64, iters: usize) -> (Vec<f64>, Vec<f64>) {
    let n = g.len();
    let k_reg = 1e-6;
    let mut u = g.to_vec();
    let mut v = vec![1.0; n];
    let thomas = |diag: &[f64], off: &[f64], rhs: &[f64]| -> Vec<f64> {
        // off[i] couples i and i+1.
        let n = diag.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = off[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - off[i - 1] * c[i - 1];
            c[i] = if i + 1 < n { off[i] / m } else { 0.0 };
            d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    };
    for _ in 0..iters {
        // u-step: face weights from v.
        let w: Vec<f64> = (0..n - 1)
            .map(|i| h * (0.5 * (v[i] * v[i] + v[i + 1] * v[i + 1]) + k_reg) / h / h * h)
            .collect();
        let mut diag = vec![lambda * h; n];
        let mut off = vec![0.0; n - 1];
        for i in 0..n - 1 {
            diag[i] += w[i];
            diag[i + 1] += w[i];
            off[i] = -w[i];
        }
        let rhs: Vec<f64> = g.iter().map(|&gi| lambda * h * gi).collect();
        u = thomas(&diag, &off, &rhs);
        // v-step.
        let mut diag = vec![h / (4.0 * eps); n];
        let mut off = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let du = (u[i + 1] - u[i]) / h;
            let load = 0.5 * h * du * du;
            diag[i] += load + eps / h;
            diag[i + 1] += load + eps / h;
            off[i] = -eps / h;
        }
        let rhs = vec![h / (4.0 * eps); n];
        v = thomas(&diag, &off, &rhs);
        for vi in v.iter_mut() {
            *vi = vi.clamp(0.0, 1.0);
        }
    }
    (u, v)
}

#[test]
fn acceptance_04_solver() {
    let t = Instant::now();
    let cfg = LabConfig::default();
    let mut pass = true;
    let mut detail = String::new();
    // Energy monotonicity and maximum principle on the solved corpus
    // scenes at 64^3.
    for id in ["plane-at", "y-at", "t-at"] {
        let corpus = reference_corpus(&cfg);
        let entry = corpus.iter().find(|e| e.id == id).unwrap();
        let prepared = prepare_scene(&cfg, entry).unwrap();
        let trace = prepared.energy_trace.as_ref().unwrap();
        let mut monotone = true;
        for w in trace.windows(2) {
            if w[1] > w[0] + 1e-8 * w[0].abs().max(1.0) {
                monotone = false;
            }
        }
        pass &= monotone;
        detail.push_str(&format!("{id}: monotone={monotone} "));
    }
    // Maximum principle + 1D profile on the pure step scene.
    let spec = SceneSpec {
        kind: SceneKind::Plane,
        contrasts: vec![0.0, 1.0],
        grid_n: 64,
        ..SceneSpec::default()
    };
    let scene = spec.build().unwrap();
    let h = scene.g.spacing;
    let state = at_minimize(&scene, 2.0 * h, 500.0, 25).unwrap();
    let max_ok = state.u.min_value() >= -1e-9 && state.u.max_value() <= 1.0 + 1e-9;
    pass &= max_ok;
    // 1D oracle along the x-line through the midpoint.
    let g1: Vec<f64> = (0..64)
        .map(|i| if (i as f64 + 0.5) * h >= 0.5 { 0.0 } else { 1.0 })
        .collect();
    let (u1, v1) = solve_1d(&g1, h, 2.0 * h, 500.0, 25);
    let mut sup_u = 0.0_f64;
    let mut sup_v = 0.0_f64;
    for i in 0..64 {
        sup_u = sup_u.max((state.u.at(i, 32, 32) - u1[i]).abs());
        sup_v = sup_v.max((state.v.at(i, 32, 32) - v1[i]).abs());
    }
    detail.push_str(&format!("max principle={max_ok} 1d sup_u={sup_u:.4} sup_v={sup_v:.4} "));
    pass &= sup_u <= 0.02 && sup_v <= 0.02;
    let secs = t.elapsed().as_secs_f64();
    let within_budget = secs < 4.0 * 300.0;
    detail.push_str(&format!("budget<4x5min: {within_budget}"));
    report("solver", pass && within_budget, &detail, secs);
}

#[test]
fn acceptance_05_jump_scale_law() {
    use mslab_core::metrics::ConeFit;
    use mslab_core::multiscale::jump;
    let t = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for (kind, contrasts) in [
        (SceneKind::Plane, vec![0.0, 1.0]),
        (SceneKind::Y, vec![0.0, 1.0, 5.0]),
        (SceneKind::T, vec![0.0, 1.0, 2.0, 3.0]),
    ] {
        let state =
            synthetic_state(kind, &contrasts, 64, 0.01, 0.46, SyntheticVariant::Exact).unwrap();
        let fit = ConeFit {
            cone: state.cone.clone(),
            beta: 0.0,
            kind_searched: vec![state.cone.kind()],
        };
        let r0 = 0.45;
        let j_at = |r: f64| {
            jump(
                &state.u,
                None,
                &state.k,
                &fit,
                &Ball {
                    center: state.center,
                    radius: r,
                },
                5e-2,
            )
            .unwrap()
            .j
        };
        let j0 = j_at(r0);
        let mut worst = 0.0_f64;
        for level in 1..4 {
            let r1 = r0 / (1 << level) as f64;
            let j1 = j_at(r1);
            worst = worst.max(((r1 / r0).sqrt() * j1 - j0).abs() / j0);
        }
        detail.push_str(&format!("{kind}: worst rel dev={worst:.2e} "));
        pass &= worst <= 1e-6;
    }
    report("jump scale law", pass, &detail, t.elapsed().as_secs_f64());
}

#[test]
fn acceptance_06_competitor() {
    use mslab_core::metrics::ConeFit;
    let t = Instant::now();
    let hole_r = 0.08;
    let state = synthetic_state(
        SceneKind::Plane,
        &[0.0, 1.0],
        48,
        0.01,
        0.46,
        SyntheticVariant::Hole {
            center_offset: 0.0,
            radius: hole_r,
        },
    )
    .unwrap();
    let b = Ball {
        center: state.center,
        radius: 0.35,
    };
    let fit = ConeFit {
        cone: state.cone.clone(),
        beta: 0.0,
        kind_searched: vec![ConeKind::P],
    };
    let comp = build_competitor(&state.u, &state.k, &b, &fit, &MultiscaleConfig::default())
        .unwrap();
    let hole_area = std::f64::consts::PI * hole_r * hole_r;
    let pass = comp.separation.separating
        && comp.area_surplus <= 1.5 * hole_area
        && comp.star.pass;
    let detail = format!(
        "separating={} surplus={:.5} (hole {:.5}) star sites={} violations={}",
        comp.separation.separating,
        comp.area_surplus,
        hole_area,
        comp.star.sites,
        comp.star.violations
    );
    report("competitor", pass, &detail, t.elapsed().as_secs_f64());
}

#[test]
fn acceptance_07_stopping_vitali() {
    let t = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    let cfg = MultiscaleConfig::default();
    let zero = |_: &Ball| 0.0;
    // Exact cone scenes: no bad balls at radii >= 10 spacing.
    for kind in [SceneKind::Plane, SceneKind::Y, SceneKind::T] {
        let contrasts: Vec<f64> = (0..kind.cone_kind().region_count())
            .map(|i| i as f64)
            .collect();
        let state =
            synthetic_state(kind, &contrasts, 32, 0.01, 0.46, SyntheticVariant::Exact).unwrap();
        let closeness = ConeCloseness::new(&state.k, Some(state.cone.clone()));
        let region = Ball {
            center: state.center,
            radius: 0.35,
        };
        let s = bad_balls(&closeness, &zero, &region, 0.2, &cfg).unwrap();
        pass &= s.balls.is_empty() && s.covered;
        detail.push_str(&format!("{kind}: bad={} ", s.balls.len()));
    }
    // One bump: exactly one bad ball localizing it, exact disjointness.
    let bump = 0.05;
    let state = synthetic_state(
        SceneKind::Plane,
        &[0.0, 1.0],
        32,
        0.01,
        0.46,
        SyntheticVariant::Bump {
            size: bump,
            offset: 0.0,
        },
    )
    .unwrap();
    let mut bump_cfg = cfg.clone();
    bump_cfg.eps0 = 0.09;
    bump_cfg.eps0_prime = 0.02;
    let closeness = ConeCloseness::new(&state.k, Some(state.cone.clone()));
    let region = Ball {
        center: state.center,
        radius: 0.3,
    };
    let s = bad_balls(&closeness, &zero, &region, 0.3, &bump_cfg).unwrap();
    detail.push_str(&format!("bump balls={} ", s.balls.len()));
    pass &= s.balls.len() == 1;
    if let (Some(ball), Some(d)) = (s.balls.first(), s.stopping_radii.first()) {
        let dist = (ball.center - state.center).norm();
        let localized = dist <= 2.0 * bump_cfg.inflation * d;
        detail.push_str(&format!("dist={dist:.4} 2Ad={:.4} ", 2.0 * bump_cfg.inflation * d));
        pass &= localized;
    }
    for (i, a) in s.balls.iter().enumerate() {
        for bb in s.balls.iter().skip(i + 1) {
            pass &= (a.center - bb.center).norm() > a.radius + bb.radius;
        }
    }
    pass &= s.covered;
    report("stopping/vitali", pass, &detail, t.elapsed().as_secs_f64());
}

#[test]
fn acceptance_08_decay_suite() {
    let t = Instant::now();
    let cfg = LabConfig::default();
    let corpus = reference_corpus(&cfg);
    let mut analyses = Vec::new();
    for entry in &corpus {
        let prepared = prepare_scene(&cfg, entry).unwrap();
        analyses.push(analyze_scene(&cfg, &prepared).unwrap());
    }
    let summary = summarize(&analyses);
    let mut pass = true;
    let mut detail = String::new();
    // The four decay checks pass on every in-regime scene.
    for name in ["jump_stability", "jump_growth", "energy_decay", "bad_mass"] {
        let ok = summary
            .records
            .iter()
            .filter(|r| r.counted && r.check == name)
            .all(|r| r.pass);
        detail.push_str(&format!("{name}={ok} "));
        pass &= ok;
    }
    // Constants within 2x of the checked-in baseline.
    let baseline_path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../baselines/reference-64.json");
    let baseline = Baseline::load(&baseline_path).expect("checked-in baseline");
    let cmp = compare_baseline(&summary, &baseline);
    detail.push_str(&format!("baseline={} ", cmp.pass));
    pass &= cmp.pass;
    // Beta power law on the dome scene (a plane AT scene).
    let dome = analyses
        .iter()
        .find(|a| a.scene_id == "plane-dome")
        .and_then(|a| a.beta_fit.as_ref())
        .expect("dome beta fit");
    detail.push_str(&format!("alpha={:.3} resid={:.3} ", dome.alpha, dome.residual));
    pass &= dome.alpha > 0.0 && dome.residual < 0.5;
    // Exact synthetic power-law recovery to 1e-6 (independent of scenes).
    {
        use mslab_core::decay::{ScaleSweep, SweepEntry};
        let r0 = 0.4;
        let alpha = 0.37;
        let c = 0.05;
        let entries: Vec<SweepEntry> = (0..6)
            .map(|i| {
                let r = r0 * 0.5_f64.powi(i);
                SweepEntry {
                    r,
                    beta: Some(c * (r / r0).powf(alpha)),
                    kind: Some(ConeKind::P),
                    omega2: Some(0.0),
                    j: Some(1.0),
                    sectors: Some(vec![0, 1]),
                    m: Some(0.0),
                    f_excess: Some(0.0),
                    gauge: 0.0,
                    surplus: Some(0.0),
                }
            })
            .collect();
        let sweep = ScaleSweep {
            scene_id: "powerlaw".into(),
            center: Point::origin(),
            r0,
            entries,
        };
        let fit = fit_beta_exponent(&sweep, 0.0, 0.0).unwrap();
        let exact = (fit.alpha - alpha).abs() <= 1e-6;
        detail.push_str(&format!("synthetic exponent ok={exact} "));
        pass &= exact;
    }
    let secs = t.elapsed().as_secs_f64();
    let within_budget = secs < 1800.0;
    detail.push_str(&format!("budget<30min: {within_budget}"));
    report("decay suite", pass && within_budget, &detail, secs);
}

#[test]
fn acceptance_09_reproducibility() {
    let t = Instant::now();
    // Identical config and seed must reproduce analyses byte for byte.
    let mut cfg = LabConfig::default();
    cfg.grid_n = 32;
    let corpus = reference_corpus(&cfg);
    let entry = corpus.iter().find(|e| e.id == "plane-at").unwrap();
    let run = || {
        let prepared = prepare_scene(&cfg, entry).unwrap();
        let analysis = analyze_scene(&cfg, &prepared).unwrap();
        let mut bytes = serde_json::to_vec(&analysis).unwrap();
        let mut k_csv = Vec::new();
        prepared.k.write_csv(&mut k_csv).unwrap();
        bytes.extend_from_slice(&k_csv);
        let mut grid = Vec::new();
        prepared.u.write_binary(&mut grid).unwrap();
        bytes.extend_from_slice(&grid);
        bytes
    };
    let a = run();
    let b = run();
    let pass = a == b;
    report(
        "reproducibility",
        pass,
        &format!("two runs identical over {} bytes", a.len()),
        t.elapsed().as_secs_f64(),
    );
}
