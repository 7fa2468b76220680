//! End-to-end pipeline tests: stage ordering, exit codes, and byte-level
//! reproducibility of the run artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn mslab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mslab"))
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        r#"{
  "lab": { "grid_n": 24 },
  "scenes": ["plane-const"]
}"#,
    )
    .unwrap();
    path
}

fn run_stage(config: &Path, out: &Path, args: &[&str]) -> i32 {
    let status = mslab()
        .arg(args[0])
        .args(&args[1..])
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .unwrap();
    status.code().unwrap()
}

#[test]
fn full_pipeline_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let out = tmp.path().join("run");

    // Solve before generate: missing input.
    assert_eq!(run_stage(&config, &out, &["solve"]), 3);

    assert_eq!(run_stage(&config, &out, &["generate"]), 0);
    assert_eq!(run_stage(&config, &out, &["solve"]), 0);

    // Verify before analyze: missing input.
    let baseline = tmp.path().join("baseline.json");
    let code = mslab()
        .args(["verify", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--baseline")
        .arg(&baseline)
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 3);

    assert_eq!(run_stage(&config, &out, &["analyze"]), 0);

    // Verify without a baseline file: distinct missing-input exit.
    let code = mslab()
        .args(["verify", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--baseline")
        .arg(&baseline)
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 3);

    // Init mode writes one, then the comparison passes.
    let code = mslab()
        .args(["verify", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--baseline")
        .arg(&baseline)
        .arg("--init-baseline")
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 0);
    assert!(baseline.exists());
    let code = mslab()
        .args(["verify", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--baseline")
        .arg(&baseline)
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 0);
    assert!(out.join("summary.json").exists());
    assert!(out.join("manifest.json").exists());

    // Report prints the table.
    assert_eq!(run_stage(&config, &out, &["report"]), 0);

    // A corrupted analysis file fails verify with a named file.
    let analysis = out.join("analysis/plane-const.json");
    fs::write(&analysis, "{not json").unwrap();
    let output = mslab()
        .args(["verify", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--baseline")
        .arg(&baseline)
        .output()
        .unwrap();
    assert_ne!(output.status.code().unwrap(), 0);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("plane-const"), "stderr: {stderr}");
}

#[test]
fn invalid_configuration_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.json");
    fs::write(
        &config,
        r#"{ "lab": { "grid_n": 24, "ms": { "eps0": 0.5 } } }"#,
    )
    .unwrap();
    let code = mslab()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("x"))
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 4);
}

#[test]
fn unknown_scene_is_invalid_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("cfg.json");
    fs::write(&config, r#"{ "scenes": ["no-such-scene"] }"#).unwrap();
    let code = mslab()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(tmp.path().join("x"))
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 4);
}

fn collect_report_files(out: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for sub in ["sweeps", "analysis", "states", "scenes"] {
        let dir = out.join(sub);
        if !dir.exists() {
            continue;
        }
        for entry in fs::read_dir(&dir).unwrap() {
            files.push(entry.unwrap().path());
        }
    }
    files.push(out.join("summary.json"));
    files.sort();
    files
}

#[test]
fn byte_identical_reports_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let mut outs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let baseline = tmp.path().join(format!("baseline-{name}.json"));
        assert_eq!(run_stage(&config, &out, &["generate"]), 0);
        assert_eq!(run_stage(&config, &out, &["solve"]), 0);
        assert_eq!(run_stage(&config, &out, &["analyze"]), 0);
        let code = mslab()
            .args(["verify", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--baseline")
            .arg(&baseline)
            .arg("--init-baseline")
            .status()
            .unwrap()
            .code()
            .unwrap();
        assert_eq!(code, 0);
        outs.push(out);
    }
    let files_a = collect_report_files(&outs[0]);
    let files_b = collect_report_files(&outs[1]);
    assert_eq!(files_a.len(), files_b.len());
    for (fa, fb) in files_a.iter().zip(&files_b) {
        assert_eq!(fa.file_name(), fb.file_name());
        let ba = fs::read(fa).unwrap();
        let bb = fs::read(fb).unwrap();
        assert_eq!(ba, bb, "artifact differs: {:?}", fa.file_name());
    }
}
