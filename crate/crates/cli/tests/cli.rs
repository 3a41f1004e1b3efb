use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lidar-change"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Sparse sensor and short route so a full simulate/detect cycle is quick.
fn light_sim(dir: &Path) -> PathBuf {
    let path = dir.join("sim.json");
    fs::write(
        &path,
        r#"{
            "lidar": {"channels": 64, "vertical_fov_deg": 90.0, "horizontal_res_deg": 0.7, "max_range": 30.0, "range_noise": 0.01},
            "route": {"poses": 10}
        }"#,
    )
    .unwrap();
    path
}

fn simulate(dir: &Path, out: &str) -> PathBuf {
    let sim = light_sim(dir);
    let out = dir.join(out);
    ok(&["simulate", "--sim-config", sim.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    out
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = simulate(tmp.path(), "a");
    let b = simulate(tmp.path(), "b");
    let (fa, fb) = (files(&a), files(&b));
    assert!(fa.len() > 10);
    assert!(fa == fb);
}

#[test]
fn unknown_script_id_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let script = tmp.path().join("script.json");
    fs::write(&script, r#"{"changes": [{"action": "remove", "id": 99}]}"#).unwrap();
    let out = run(&["simulate", "--script", script.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("99") && err.contains("simulate"), "{err}");
}

#[test]
fn config_errors_carry_stage_and_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"octree": {"resolution": 0.05, "bogus": 1}}"#).unwrap();
    let d = tmp.path().to_str().unwrap();
    let out = run(&["detect", "--mission-a", d, "--mission-b", d, "--config", cfg.to_str().unwrap(), "--out", d]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config") && err.contains("octree.bogus"), "{err}");
}

#[test]
fn bad_weights_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().to_str().unwrap();
    let out = run(&["detect", "--mission-a", d, "--mission-b", d, "--alpha=-1", "--out", d]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}

#[test]
fn missing_mission_reports_input_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("nothing");
    let d = d.to_str().unwrap();
    let out = run(&["detect", "--mission-a", d, "--mission-b", d, "--out", d]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `input`"));
}

#[test]
fn identity_run_reports_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "data");
    let a = data.join("mission_a");
    let copy = tmp.path().join("copy");
    fs::create_dir_all(copy.join("scans")).unwrap();
    for (rel, bytes) in files(&a) {
        fs::write(copy.join(rel), bytes).unwrap();
    }
    let out = tmp.path().join("det");
    let stdout = ok(&[
        "--threads",
        "1",
        "detect",
        "--mission-a",
        a.to_str().unwrap(),
        "--mission-b",
        copy.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.starts_with("0 changed voxels, 0 segments, 0 correspondences"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["changed_voxels"], 0);
    assert_eq!(report["correspondences"].as_array().unwrap().len(), 0);
}

#[test]
fn full_cycle_is_reproducible_from_written_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "data");
    let (a, b) = (data.join("mission_a"), data.join("mission_b"));
    let det = |out: &Path, cfg: Option<&Path>| {
        let mut args = vec![
            "detect",
            "--mission-a",
            a.to_str().unwrap(),
            "--mission-b",
            b.to_str().unwrap(),
            "--truth",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        if let Some(c) = cfg {
            args.extend(["--config", c.to_str().unwrap()]);
        }
        ok(&args)
    };
    let first = tmp.path().join("first");
    let table = det(&first, None);
    assert!(table.contains("Precision"), "{table}");
    let second = tmp.path().join("second");
    det(&second, Some(&first.join("config.json")));
    for name in ["report.json", "match_matrix.csv", "config.json", "metrics.json"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }

    let eval = ok(&["evaluate", "--report", first.to_str().unwrap(), "--dataset", data.to_str().unwrap()]);
    assert!(eval.contains("Recall"));

    let desc = tmp.path().join("desc.txt");
    let segs = first.join("segments");
    ok(&["describe", "--segments", segs.to_str().unwrap(), "--out", desc.to_str().unwrap()]);
    let m = tmp.path().join("match");
    ok(&[
        "match",
        "--segments",
        segs.to_str().unwrap(),
        "--descriptors",
        desc.to_str().unwrap(),
        "--out",
        m.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(m.join("match_matrix.csv")).unwrap();
    assert!(csv.starts_with("classA_id,classB_id,confidence\n"));
    let parse = |text: &str| -> Vec<(String, f64)> {
        text.lines()
            .skip(1)
            .map(|l| {
                let (ids, conf) = l.rsplit_once(',').unwrap();
                (ids.to_string(), conf.parse().unwrap())
            })
            .collect()
    };
    let (got, want) = (parse(&csv), parse(&fs::read_to_string(first.join("match_matrix.csv")).unwrap()));
    assert_eq!(got.len(), want.len());
    for ((ig, cg), (iw, cw)) in got.iter().zip(&want) {
        assert_eq!(ig, iw);
        assert!((cg - cw).abs() < 1e-9, "{ig}: {cg} vs {cw}");
    }
}

#[test]
fn align_writes_missions_in_common_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let data = simulate(tmp.path(), "data");
    let out = tmp.path().join("aligned");
    let stdout = ok(&[
        "align",
        "--mission-a",
        data.join("mission_a").to_str().unwrap(),
        "--mission-b",
        data.join("mission_b").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("loop closures accepted"));
    for f in ["mission_a/trajectory.txt", "mission_b/trajectory.txt", "closures.json", "config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
