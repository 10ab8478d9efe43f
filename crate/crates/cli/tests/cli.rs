use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use beamscan_core::sounder::PdpTensor;

fn beamscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamscan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const REPORTS: [&str; 4] = ["fig5.csv", "table2.csv", "summary.json", "fig9_case08.csv"];

#[test]
fn missing_scene_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("no_such_venue.toml");
    let o = beamscan(&["trace", "--scene", arg(&scene), "--out", arg(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_venue.toml"), "{}", stderr(&o));
}

#[test]
fn free_space_trace_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("empty.toml");
    fs::write(
        &scene,
        "beamscan-scene v1\n[tx]\nposition = [0, 0, 1.5]\n[rx]\nposition = [4, 0, 1.5]\nheading_deg = 180\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = beamscan(&["trace", "--scene", arg(&scene), "--cases", "1", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("trace_case01.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("LOS,4.0"));
}

#[test]
fn case8_trace_lists_the_visible_paths() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamscan(&["trace", "--cases", "8", "--out", arg(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("trace_case08.csv")).unwrap();
    let mut surfaces: Vec<String> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect();
    surfaces.sort();
    assert_eq!(
        surfaces,
        [
            "",
            "back_wall:R;pillar:R",
            "cabinet:R;floor:R",
            "floor:R",
            "pole_n:R;glass:T",
            "pole_s:R"
        ]
    );
}

#[test]
fn all_paths_adds_out_of_view_paths() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamscan(&["trace", "--cases", "8", "--all-paths", "--out", arg(dir.path())]);
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("trace_case08.csv")).unwrap();
    assert!(text.lines().count() - 1 > 6);
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = arg(dir.path());
    assert!(beamscan(&["trace", "--cases", "3", "--out", out]).status.success());
    let o = beamscan(&["trace", "--cases", "3", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--force"));
    assert!(beamscan(&["trace", "--cases", "3", "--out", out, "--force"])
        .status
        .success());
}

#[test]
fn unknown_case_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamscan(&["trace", "--cases", "13", "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn short_run_is_fast_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = beamscan(&["run", "--n-scan", "10", "--out", arg(dir.path())]);
    let elapsed = start.elapsed();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(elapsed < Duration::from_secs(20), "took {elapsed:?}");
    for name in REPORTS {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let fig5 = fs::read_to_string(dir.path().join("fig5.csv")).unwrap();
    assert_eq!(fig5.lines().count(), 13);
}

#[test]
fn smoke_simulation_is_fast_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let start = Instant::now();
    let o = beamscan(&["simulate", "--n-scan", "10", "--seed", "3", "--out", arg(&a)]);
    let elapsed = start.elapsed();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    assert!(
        beamscan(&["simulate", "--n-scan", "10", "--seed", "3", "--out", arg(&b)])
            .status
            .success()
    );
    for id in 1..=12 {
        let name = format!("case{id:02}.bscn");
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name}"
        );
    }
    let x = PdpTensor::load(&a.join("case08.bscn")).unwrap();
    assert_eq!((x.n_dly(), x.n_dir(), x.n_scan()), (192, 144, 10));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = beamscan(&[
            "run",
            "--n-scan",
            "20",
            "--cases",
            "2,8",
            "--seed",
            "7",
            "--out",
            arg(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in REPORTS {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = beamscan(&[
        "run",
        "--n-scan",
        "20",
        "--cases",
        "5",
        "--seed",
        "11",
        "--peak-threshold-db",
        "4",
        "--out",
        arg(&a),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = a.join("run.config.toml");
    let o = beamscan(&["run", "--config", arg(&echo), "--out", arg(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["fig5.csv", "table2.csv", "summary.json", "run.config.toml"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "cases = [4]\n[pipeline]\nguard_m = 7\n").unwrap();
    let out = dir.path().join("out");
    let o = beamscan(&["trace", "--config", arg(&cfg), "--guard-m", "3", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("trace_case04.csv").exists());
    let echo = fs::read_to_string(out.join("trace.config.toml")).unwrap();
    assert!(echo.contains("guard_m = 3"), "{echo}");
    assert!(echo.contains("cases = [4]"), "{echo}");
}

#[test]
fn simulate_then_analyze_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let (t, a, r) = (dir.path().join("t"), dir.path().join("a"), dir.path().join("r"));
    let common = ["--n-scan", "15", "--cases", "8"];
    let sim = [&["simulate", "--blocker", "--out", arg(&t)][..], &common[..]].concat();
    assert!(beamscan(&sim).status.success());
    assert!(t.join("case08.bscn").exists() && t.join("case08_blocked.bscn").exists());
    let ana = [&["analyze", "--tensors", arg(&t), "--out", arg(&a)][..], &common[..]].concat();
    let o = beamscan(&ana);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = [&["run", "--out", arg(&r)][..], &common[..]].concat();
    assert!(beamscan(&run).status.success());
    for name in REPORTS {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(r.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn pure_noise_tensor_fails_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t");
    fs::create_dir_all(&t).unwrap();
    let x = PdpTensor::from_fn(192, 144, 10, -85.0, |tau, n, j| {
        -85.0 + 0.1 * (((tau * 7 + n * 3 + j) % 5) as f64)
    })
    .unwrap();
    x.save(&t.join("case01.bscn")).unwrap();
    let out = dir.path().join("out");
    let o = beamscan(&["analyze", "--cases", "1", "--tensors", arg(&t), "--out", arg(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("no signal detected"), "{summary}");
}

#[test]
fn missing_tensor_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = beamscan(&[
        "analyze",
        "--cases",
        "2",
        "--tensors",
        arg(dir.path()),
        "--out",
        arg(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("case02.bscn"));
}
