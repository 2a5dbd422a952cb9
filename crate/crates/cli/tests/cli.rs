use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use herdgraph::config::Config;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_herdgraph"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn default_config_json() -> serde_json::Value {
    let o = run(&["default-config"]);
    assert_eq!(code(&o), 0);
    serde_json::from_slice(&o.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn default_config_round_trips() {
    let text = serde_json::to_string(&default_config_json()).unwrap();
    assert_eq!(Config::from_json(&text).unwrap(), Config::default());
}

#[test]
fn missing_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config_json();
    cfg["gate"].as_object_mut().unwrap().remove("dwell_s");
    let p = write(dir.path(), "cfg.json", &cfg.to_string());
    let o = run(&["--config", path(&p), "--out-dir", path(dir.path()), "synth"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("dwell_s"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config_json();
    cfg["gate"]["alhpa"] = 0.3.into();
    let p = write(dir.path(), "cfg.json", &cfg.to_string());
    let o = run(&["--config", path(&p), "--out-dir", path(dir.path()), "synth"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("alhpa"), "{}", stderr(&o));
}

#[test]
fn invalid_config_value_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = default_config_json();
    cfg["gate"]["alpha"] = (-1.0).into();
    let p = write(dir.path(), "cfg.json", &cfg.to_string());
    assert_eq!(code(&run(&["--config", path(&p), "--out-dir", path(dir.path()), "synth"])), 3);
}

#[test]
fn usage_error_exits_2() {
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["track"])), 2);
}

#[test]
fn missing_input_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.jsonl");
    let o = run(&["--out-dir", path(dir.path()), "track", "--frames", path(&missing)]);
    assert_eq!(code(&o), 6, "{}", stderr(&o));
}

const HEADER: &str = r#"{"format":"herdgraph/1","kind":"frames","meta":{"fps":30.0,"image_width":640,"image_height":480,"source_id":"t"}}"#;

#[test]
fn unknown_format_version_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "f.jsonl", &format!("{}\n", HEADER.replace("herdgraph/1", "herdgraph/9")));
    let o = run(&["--out-dir", path(dir.path()), "track", "--frames", path(&p)]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("herdgraph/9"), "{}", stderr(&o));
}

#[test]
fn malformed_skeleton_names_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let det = r#"{"bbox":{"x1":0.0,"y1":0.0,"x2":10.0,"y2":10.0},"confidence":0.9,"identity":null,"skeleton":{"points":[{"x":1.0,"y":1.0,"visibility":"visible","confidence":0.9}]}}"#;
    let frame = format!(r#"{{"frame_index":0,"timestamp_s":0.0,"detections":[{det}]}}"#);
    let p = write(dir.path(), "f.jsonl", &format!("{HEADER}\n{frame}\n"));
    let o = run(&["--out-dir", path(dir.path()), "track", "--frames", path(&p)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("skeleton.points"), "{err}");
}

fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = default_config_json();
    cfg["synth"]["scene"]["events"] = 4.into();
    cfg["synth"]["training_events"] = 12.into();
    write(dir, "cfg.json", &cfg.to_string())
}

/// Every output file except wall-clock timings, by relative path.
fn outputs(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "timings.json" {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut runs = Vec::new();
    for workers in ["1", "4"] {
        let out = dir.path().join(format!("w{workers}"));
        let o = run(&["--config", path(&cfg), "--workers", workers, "--out-dir", path(&out), "pipeline"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(out.join("timings.json").exists());
        runs.push(outputs(&out));
    }
    assert!(runs[0].len() > 10);
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn staged_commands_match_pipeline_tracks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let d = |s: &str| dir.path().join(s);
    let ok = |args: &[&str]| {
        let mut full = vec!["--config", path(&cfg)];
        full.extend_from_slice(args);
        let o = run(&full);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    };
    ok(&["--out-dir", path(&d("scene")), "synth", "--kind", "scene"]);
    ok(&["--out-dir", path(&d("t")), "track", "--frames", path(&d("scene/frames.jsonl"))]);
    ok(&["--out-dir", path(&d("s")), "stabilize", "--tracks", path(&d("t/tracks.jsonl"))]);
    ok(&[
        "--out-dir",
        path(&d("g")),
        "gate",
        "--tracks",
        path(&d("t/tracks.jsonl")),
        "--trajectories",
        path(&d("s/trajectories.jsonl")),
    ]);
    ok(&[
        "--out-dir",
        path(&d("f")),
        "features",
        "--windows",
        path(&d("g/windows.jsonl")),
        "--events",
        path(&d("scene/gt_events.jsonl")),
    ]);
    ok(&["--out-dir", path(&d("p")), "pipeline", "--frames", path(&d("scene/frames.jsonl"))]);
    assert_eq!(
        std::fs::read(d("t/tracks.jsonl")).unwrap(),
        std::fs::read(d("p/tracks.jsonl")).unwrap()
    );
    assert_eq!(
        std::fs::read(d("f/features.csv")).unwrap(),
        std::fs::read(d("p/features.csv")).unwrap()
    );
    let samples = std::fs::read_to_string(d("f/samples.csv")).unwrap();
    assert!(samples.lines().skip(1).any(|l| !l.ends_with(',')), "no labeled windows");
}

#[test]
fn failed_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let scene = dir.path().join("scene");
    let o = run(&["--config", path(&cfg), "--out-dir", path(&scene), "synth", "--kind", "scene"]);
    assert_eq!(code(&o), 0);
    // an extra ground-truth event the frames never show
    let gt = std::fs::read_to_string(scene.join("gt_events.jsonl")).unwrap();
    let extra = r#"{"pair":["cow01","cow02"],"label":"headbutt","frame_span":[0,10],"confidence":1.0}"#;
    let forged = write(dir.path(), "forged.jsonl", &format!("{gt}{extra}\n"));
    let o = run(&[
        "--config",
        path(&cfg),
        "--check",
        "--out-dir",
        path(&dir.path().join("p")),
        "pipeline",
        "--frames",
        path(&scene.join("frames.jsonl")),
        "--events",
        path(&forged),
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL ground_truth_edges_agonistic"), "{stdout}");
    let checks: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("p/checks.json")).unwrap()).unwrap();
    assert!(checks.as_array().unwrap().iter().any(|c| c["passed"] == false));
}

#[test]
fn network_from_events_file() {
    let dir = tempfile::tempdir().unwrap();
    let events = write(
        dir.path(),
        "events.jsonl",
        concat!(
            r#"{"format":"herdgraph/1","kind":"events"}"#,
            "\n",
            r#"{"pair":["A","B"],"label":"headbutt","frame_span":[0,179],"confidence":0.9}"#,
            "\n",
            r#"{"pair":["A","B"],"label":"headbutt","frame_span":[194,373],"confidence":0.7}"#,
            "\n",
            r#"{"pair":["B","C"],"label":"lick_groom","frame_span":[0,179],"confidence":0.8}"#,
            "\n",
        ),
    );
    let out = dir.path().join("n");
    let o = run(&["--check", "--out-dir", path(&out), "network", "--events", path(&events)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ago = herdgraph::io::read_graphml(&std::fs::read_to_string(out.join("graph_agonistic.graphml")).unwrap()).unwrap();
    // a 14-frame gap at 30 fps is under a second: one merged event
    assert_eq!(ago.weight("A", "B"), 1.0);
    assert_eq!(ago.total_weight(), 1.0);
    let dot = std::fs::read_to_string(out.join("graph_combined.dot")).unwrap();
    assert!(dot.contains(r#""A" -- "B" [weight=1];"#), "{dot}");
}
