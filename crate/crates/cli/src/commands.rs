//! The generate / solve / analyze / verify / report pipeline stages.

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

use mslab_core::cone::MinimalCone;
use mslab_core::decay::GaugeSpec;
use mslab_core::geometry::Point;
use mslab_core::grid::ScalarGrid;
use mslab_core::lab::{
    self, Baseline, CorpusEntry, PreparedScene, SceneAnalysis, SceneSource, VerifySummary,
};
use mslab_core::scene::Scene;
use mslab_core::sets::DiscreteSet;
use mslab_core::solver::{at_minimize, extract_singular_set};

use crate::config::{ensure_dir, RunConfig};
use crate::manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 2;
pub const EXIT_MISSING_INPUT: i32 = 3;
pub const EXIT_INVALID_CONFIG: i32 = 4;

/// Per-state metadata persisted next to the grids.
#[derive(Debug, Serialize, Deserialize)]
struct StateMeta {
    id: String,
    hint: MinimalCone,
    gauge: GaugeSpec,
    center: [f64; 3],
    k_spacing: f64,
    build_competitor: bool,
    energy_trace: Option<Vec<f64>>,
}

fn corpus_for(cfg: &RunConfig) -> anyhow::Result<Vec<CorpusEntry>> {
    let all = lab::reference_corpus(&cfg.lab);
    if cfg.scenes.is_empty() {
        return Ok(all);
    }
    let mut out = Vec::new();
    for want in &cfg.scenes {
        match all.iter().find(|e| &e.id == want) {
            Some(e) => out.push(e.clone()),
            None => {
                return Err(anyhow!(
                    "unknown scene id '{want}' (known: {})",
                    all.iter()
                        .map(|e| e.id.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            }
        }
    }
    Ok(out)
}

fn scene_meta_path(out: &Path, id: &str) -> PathBuf {
    out.join("scenes").join(format!("{id}.scene.json"))
}

pub fn cmd_generate(cfg: &RunConfig, out: &PathBuf) -> anyhow::Result<i32> {
    let start = Instant::now();
    ensure_dir(out)?;
    ensure_dir(&out.join("scenes"))?;
    let corpus = corpus_for(cfg).map_err(|e| e.context("invalid scene selection"))?;
    let mut manifest = RunManifest::load_or_new(&out.join("manifest.json"), &cfg.digest()?);
    for entry in &corpus {
        let meta_path = scene_meta_path(out, &entry.id);
        std::fs::write(&meta_path, serde_json::to_string_pretty(entry)?)?;
        manifest.record_artifact(out, &meta_path)?;
        if let SceneSource::Solved(spec) = &entry.source {
            let scene = spec.build()?;
            let base = out.join("scenes").join(format!("{}.g", entry.id));
            scene.g.save(&base)?;
            manifest.record_artifact(out, &mslab_core::grid::sibling(&base, "f64"))?;
            manifest.record_artifact(out, &mslab_core::grid::sibling(&base, "json"))?;
            println!(
                "generated {}: {}^3 grid, |g|_inf = {:.3}",
                entry.id,
                spec.grid_n,
                scene.g.max_value().abs().max(scene.g.min_value().abs())
            );
        } else {
            println!("generated {}: synthetic definition", entry.id);
        }
    }
    manifest.record_timing("generate", start.elapsed().as_secs_f64());
    manifest.save(&out.join("manifest.json"))?;
    Ok(EXIT_OK)
}

fn load_entry(out: &Path, id: &str) -> anyhow::Result<Option<CorpusEntry>> {
    let path = scene_meta_path(out, id);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    Ok(Some(serde_json::from_str(&text)?))
}

fn prepare_from_files(
    cfg: &RunConfig,
    out: &Path,
    entry: &CorpusEntry,
) -> anyhow::Result<PreparedScene> {
    match &entry.source {
        SceneSource::Synthetic { .. } => {
            // Synthetic states are cheap and fully determined by the
            // definition file.
            Ok(lab::prepare_scene(&cfg.lab, entry)?)
        }
        SceneSource::Solved(spec) => {
            let gbase = out.join("scenes").join(format!("{}.g", entry.id));
            if !mslab_core::grid::sibling(&gbase, "f64").exists() {
                return Err(anyhow!("missing scene grid {}", gbase.display()));
            }
            let g = ScalarGrid::load(&gbase)?;
            let rebuilt = spec.build()?;
            let scene = Scene { g, ..rebuilt };
            let h = scene.g.spacing;
            let state = at_minimize(
                &scene,
                cfg.lab.solver.epsilon_factor * h,
                cfg.lab.solver.fidelity,
                cfg.lab.solver.iters,
            )?;
            let k = extract_singular_set(&state, cfg.lab.solver.threshold)?;
            if k.is_empty() {
                return Err(anyhow!("scene {} produced an empty singular set", entry.id));
            }
            Ok(PreparedScene {
                id: entry.id.clone(),
                u: state.u.clone(),
                k,
                hint: scene.cone.clone(),
                gauge: GaugeSpec::Linear {
                    constant: scene.gauge_constant,
                },
                center: scene.center,
                build_competitor: entry.build_competitor,
                energy_trace: Some(state.energy_trace.clone()),
                v: Some(state.v),
            })
        }
    }
}

pub fn cmd_solve(cfg: &RunConfig, out: &PathBuf) -> anyhow::Result<i32> {
    let start = Instant::now();
    let corpus = corpus_for(cfg)?;
    ensure_dir(&out.join("states"))?;
    let mut manifest = RunManifest::load_or_new(&out.join("manifest.json"), &cfg.digest()?);
    for entry in &corpus {
        let Some(stored) = load_entry(out, &entry.id)? else {
            eprintln!("missing scene file for '{}'; run generate first", entry.id);
            return Ok(EXIT_MISSING_INPUT);
        };
        let prepared = match prepare_from_files(cfg, out, &stored) {
            Ok(p) => p,
            Err(e) if e.to_string().starts_with("missing scene grid") => {
                eprintln!("{e}");
                return Ok(EXIT_MISSING_INPUT);
            }
            Err(e) => return Err(e),
        };
        let states = out.join("states");
        let ubase = states.join(format!("{}.u", entry.id));
        prepared.u.save(&ubase)?;
        manifest.record_artifact(out, &mslab_core::grid::sibling(&ubase, "f64"))?;
        manifest.record_artifact(out, &mslab_core::grid::sibling(&ubase, "json"))?;
        if let Some(v) = &prepared.v {
            let vbase = states.join(format!("{}.v", entry.id));
            v.save(&vbase)?;
            manifest.record_artifact(out, &mslab_core::grid::sibling(&vbase, "f64"))?;
            manifest.record_artifact(out, &mslab_core::grid::sibling(&vbase, "json"))?;
        }
        let kcsv = states.join(format!("{}.k.csv", entry.id));
        prepared.k.save_csv(&kcsv)?;
        manifest.record_artifact(out, &kcsv)?;
        let kply = states.join(format!("{}.k.ply", entry.id));
        prepared.k.save_ply(&kply)?;
        manifest.record_artifact(out, &kply)?;
        let meta = StateMeta {
            id: prepared.id.clone(),
            hint: prepared.hint.clone(),
            gauge: prepared.gauge,
            center: [prepared.center.x, prepared.center.y, prepared.center.z],
            k_spacing: prepared.k.spacing(),
            build_competitor: prepared.build_competitor,
            energy_trace: prepared.energy_trace.clone(),
        };
        let mpath = states.join(format!("{}.state.json", entry.id));
        std::fs::write(&mpath, serde_json::to_string_pretty(&meta)?)?;
        manifest.record_artifact(out, &mpath)?;
        let trace_note = meta
            .energy_trace
            .as_ref()
            .map(|t| format!("energy {:.4} after {} sweeps", t.last().unwrap_or(&0.0), t.len()))
            .unwrap_or_else(|| "synthetic".into());
        println!("solved {}: |K| = {} points, {}", entry.id, prepared.k.len(), trace_note);
    }
    manifest.record_timing("solve", start.elapsed().as_secs_f64());
    manifest.save(&out.join("manifest.json"))?;
    Ok(EXIT_OK)
}

fn load_prepared(cfg: &RunConfig, out: &Path, id: &str) -> anyhow::Result<Option<PreparedScene>> {
    let states = out.join("states");
    let mpath = states.join(format!("{id}.state.json"));
    if !mpath.exists() {
        return Ok(None);
    }
    let meta: StateMeta = serde_json::from_str(&std::fs::read_to_string(&mpath)?)?;
    let u = ScalarGrid::load(&states.join(format!("{id}.u")))?;
    let vbase = states.join(format!("{id}.v"));
    let v = mslab_core::grid::sibling(&vbase, "f64")
        .exists()
        .then(|| ScalarGrid::load(&vbase))
        .transpose()?;
    let kfile = std::fs::File::open(states.join(format!("{id}.k.csv")))?;
    let k = DiscreteSet::read_csv(std::io::BufReader::new(kfile), meta.k_spacing)?;
    let _ = cfg;
    Ok(Some(PreparedScene {
        id: meta.id,
        u,
        k,
        hint: meta.hint,
        gauge: meta.gauge,
        center: Point::new(meta.center[0], meta.center[1], meta.center[2]),
        build_competitor: meta.build_competitor,
        energy_trace: meta.energy_trace,
        v,
    }))
}

pub fn cmd_analyze(cfg: &RunConfig, out: &PathBuf) -> anyhow::Result<i32> {
    let start = Instant::now();
    let corpus = corpus_for(cfg)?;
    ensure_dir(&out.join("sweeps"))?;
    ensure_dir(&out.join("analysis"))?;
    let mut manifest = RunManifest::load_or_new(&out.join("manifest.json"), &cfg.digest()?);
    for entry in &corpus {
        let Some(prepared) = load_prepared(cfg, out, &entry.id)? else {
            eprintln!("missing state for '{}'; run solve first", entry.id);
            return Ok(EXIT_MISSING_INPUT);
        };
        let analysis = lab::analyze_scene(&cfg.lab, &prepared)?;
        let sweeps = out.join("sweeps");
        let dyadic = sweeps.join(format!("{}.dyadic.csv", entry.id));
        analysis
            .dyadic
            .write_csv(std::io::BufWriter::new(std::fs::File::create(&dyadic)?))?;
        manifest.record_artifact(out, &dyadic)?;
        let fine = sweeps.join(format!("{}.fine.csv", entry.id));
        analysis
            .fine
            .write_csv(std::io::BufWriter::new(std::fs::File::create(&fine)?))?;
        manifest.record_artifact(out, &fine)?;
        let beta = sweeps.join(format!("{}.beta.csv", entry.id));
        analysis
            .fine
            .write_beta_csv(std::io::BufWriter::new(std::fs::File::create(&beta)?))?;
        manifest.record_artifact(out, &beta)?;
        let apath = out.join("analysis").join(format!("{}.json", entry.id));
        std::fs::write(&apath, serde_json::to_string_pretty(&analysis)?)?;
        manifest.record_artifact(out, &apath)?;
        println!(
            "analyzed {}: {} dyadic levels, {} checks",
            entry.id,
            analysis.dyadic.entries.len(),
            analysis.checks.len()
        );
    }
    manifest.record_timing("analyze", start.elapsed().as_secs_f64());
    manifest.save(&out.join("manifest.json"))?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryFile {
    summary: VerifySummary,
    baseline: Option<lab::BaselineComparison>,
}

pub fn cmd_verify(
    cfg: &RunConfig,
    out: &PathBuf,
    baseline_path: &PathBuf,
    init_baseline: bool,
    check_filter: Option<&str>,
) -> anyhow::Result<i32> {
    let start = Instant::now();
    let corpus = corpus_for(cfg)?;
    let mut analyses: Vec<SceneAnalysis> = Vec::new();
    for entry in &corpus {
        let apath = out.join("analysis").join(format!("{}.json", entry.id));
        if !apath.exists() {
            eprintln!("missing analysis for '{}'; run analyze first", entry.id);
            return Ok(EXIT_MISSING_INPUT);
        }
        let text = std::fs::read_to_string(&apath)?;
        let analysis: SceneAnalysis = serde_json::from_str(&text)
            .with_context(|| format!("corrupted analysis file {}", apath.display()))?;
        analyses.push(analysis);
    }
    let summary = lab::summarize(&analyses);

    let comparison = if init_baseline {
        let baseline = Baseline::from_summary(&summary, cfg.lab.grid_n);
        if let Some(dir) = baseline_path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        baseline.save(baseline_path)?;
        println!("baseline written to {}", baseline_path.display());
        None
    } else {
        if !baseline_path.exists() {
            eprintln!(
                "baseline {} not found (use --init-baseline to create one)",
                baseline_path.display()
            );
            return Ok(EXIT_MISSING_INPUT);
        }
        let baseline = Baseline::load(baseline_path)?;
        Some(lab::compare_baseline(&summary, &baseline))
    };

    for r in &summary.records {
        if check_filter.map_or(false, |f| f != r.check) {
            continue;
        }
        println!(
            "{:<20} {:<20} C = {:>12.5e}  [{}]",
            r.scene,
            r.check,
            r.constant,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    if let Some(cmp) = &comparison {
        for e in &cmp.entries {
            if !e.pass {
                println!(
                    "baseline regression: {} measured {:.5e} vs baseline {:?}",
                    e.key, e.measured, e.baseline
                );
            }
        }
    }

    let file = SummaryFile {
        summary: summary.clone(),
        baseline: comparison.clone(),
    };
    let spath = out.join("summary.json");
    std::fs::write(&spath, serde_json::to_string_pretty(&file)?)?;
    let mut manifest = RunManifest::load_or_new(&out.join("manifest.json"), &cfg.digest()?);
    manifest.record_artifact(out, &spath)?;
    manifest.record_timing("verify", start.elapsed().as_secs_f64());
    manifest.save(&out.join("manifest.json"))?;

    let checks_pass = match check_filter {
        Some(f) => summary
            .records
            .iter()
            .filter(|r| r.check == f)
            .all(|r| r.pass),
        None => summary.all_pass,
    };
    let baseline_pass = comparison.as_ref().map_or(true, |c| c.pass);
    if checks_pass && baseline_pass {
        println!("verify: all checks passed");
        Ok(EXIT_OK)
    } else {
        println!("verify: FAILURES detected");
        Ok(EXIT_CHECK_FAILURE)
    }
}

pub fn cmd_report(out: &PathBuf) -> anyhow::Result<i32> {
    let spath = out.join("summary.json");
    if !spath.exists() {
        eprintln!("no summary at {}; run verify first", spath.display());
        return Ok(EXIT_MISSING_INPUT);
    }
    let file: SummaryFile = serde_json::from_str(&std::fs::read_to_string(&spath)?)?;
    println!("{:<20} {:<20} {:>14} {:>6}", "scene", "check", "constant", "pass");
    for r in &file.summary.records {
        println!(
            "{:<20} {:<20} {:>14.5e} {:>6}",
            r.scene,
            r.check,
            r.constant,
            if r.pass { "yes" } else { "NO" }
        );
    }
    if let Ok(text) = std::fs::read_to_string(out.join("manifest.json")) {
        if let Ok(manifest) = serde_json::from_str::<RunManifest>(&text) {
            println!("\nstage timings (s):");
            for (stage, secs) in &manifest.timings {
                println!("  {stage:<10} {secs:.2}");
            }
            println!("artifacts: {}", manifest.artifacts.len());
        }
    }
    println!(
        "\noverall: {}",
        if file.summary.all_pass && file.baseline.as_ref().map_or(true, |b| b.pass) {
            "pass"
        } else {
            "FAIL"
        }
    );
    Ok(EXIT_OK)
}
