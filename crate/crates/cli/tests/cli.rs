use std::path::Path;
use std::process::{Command, Output};

use vrmerge_core::sim;

fn vrmerge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrmerge")).args(args).output().expect("spawn vrmerge")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SHORT: &str = r#"
name = "short"
duration = 6.0
record_every = 10

[vehicles]
mainline = [0.0, -30.0, -46.0]
ramp = [-20.0, -40.0]

[controller]
scheme = "geometric"
"#;

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(vrmerge(&["--help"]).status.code(), Some(0));
    assert_eq!(vrmerge(&["--version"]).status.code(), Some(0));
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = vrmerge(&["topology", "--flags", "MR", "--colour"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--colour"));
}

#[test]
fn bad_lane_pattern_is_usage_error() {
    assert_eq!(vrmerge(&["topology", "--flags", "MXR"]).status.code(), Some(1));
}

#[test]
fn invalid_config_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[vehicles]\nmainline = [0.0]\n\n[controller]\ntau = -1.0\n");
    let out = dir.path().join("o");
    let o = vrmerge(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml:5: tau must be > 0"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_config_error() {
    let o = vrmerge(&["simulate", "--config", "/nonexistent/x.toml", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn topology_prints_contiguous_predecessors() {
    let o = vrmerge(&["topology", "--flags", "01101"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row4 = text.lines().find(|l| l.trim_start().starts_with("4 ")).unwrap();
    assert!(row4.ends_with("[3, 2, 1]"), "{row4}");
    let row5 = text.lines().find(|l| l.trim_start().starts_with("5 ")).unwrap();
    assert!(row5.ends_with("[4, 3]"), "{row5}");
}

#[test]
fn sequence_interleaves_lanes() {
    let o = vrmerge(&["sequence", "--mainline", "0,-30,-46", "--ramp", "-20,-40"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("positions: [0.0, -20.0, -30.0, -40.0, -46.0]"), "{}", stdout(&o));
}

#[test]
fn sequence_rejects_nonfinite_positions() {
    let o = vrmerge(&["sequence", "--mainline", "0,NaN"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn analyze_stable_and_infeasible() {
    let ok = vrmerge(&["analyze", "--omega-e", "1.4", "--omega-v", "0.3", "--tau", "1", "--predecessors", "4"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("string stable: true"));
    let bad = vrmerge(&["analyze", "--omega-e", "0.5", "--omega-v", "1.5", "--tau", "0.5", "--predecessors", "2"]);
    assert_eq!(bad.status.code(), Some(4));
    assert!(stdout(&bad).contains("string stable: false"));
}

#[test]
fn analyze_writes_magnitude_plots() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrmerge(&["analyze", "--scheme", "geometric", "--predecessors", "3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let svg = std::fs::read_to_string(dir.path().join("magnitude_n3.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="series""#).count(), 3);
    assert!(dir.path().join("stability.txt").exists());
}

#[test]
fn simulate_trace_matches_library_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.toml", SHORT);
    let out = dir.path().join("out");
    let o = vrmerge(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--no-plots"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!out.join("speeds.svg").exists());
    let file = vrmerge_cli::trace_io::read_trace(&out.join("trace.csv")).unwrap();
    let scenario = vrmerge_cli::parse_scenario_str(SHORT, "short").unwrap();
    let direct = sim::run(&scenario).unwrap();
    assert_eq!(file.trace.len(), direct.len());
    for (a, b) in file.trace.vehicles.iter().zip(&direct.vehicles) {
        assert_eq!(a.id, b.id);
        for (x, y) in a.x.iter().zip(&b.x) {
            assert!((x - y).abs() <= 1e-7 * y.abs().max(1.0));
        }
    }
    // The echoed config reproduces the scenario.
    let echoed = vrmerge_cli::parse_scenario_str(file.config.as_deref().unwrap(), "echo").unwrap();
    assert_eq!(echoed, scenario);
    assert!(std::fs::read_to_string(out.join("metrics.txt")).unwrap().contains("short"));
}

#[test]
fn collision_exits_three_and_keeps_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "crash.toml",
        r#"
duration = 30.0
[vehicles]
mainline = [0.0, -1.0]
initial_speed = 20.0
[controller]
omega_e = 0.01
omega_v = 2.0
[leader]
kind = "brake_accel"
brake_at = 0.0
decel = 1.0
low_speed = 0.0
accel_at = 5000.0
accel = 1.0
"#,
    );
    let out = dir.path().join("out");
    let o = vrmerge(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}{}", stdout(&o), stderr(&o));
    let file = vrmerge_cli::trace_io::read_trace(&out.join("trace.csv")).unwrap();
    assert!(file.trace.collided());
    assert!(file.trace.times.last().unwrap() < &30.0);
}

#[test]
fn replicate_region_figures() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrmerge(&["replicate", "regions", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let svgs = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert_eq!(svgs, 36);
    let text = std::fs::read_to_string(dir.path().join("region_equal_tau1_n2.svg")).unwrap();
    assert!(text.contains(r#"class="feasible""#));
}

#[test]
fn replicate_extreme_merge() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrmerge(&["replicate", "extreme-merge", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["positions.svg", "speeds.svg", "accelerations.svg", "gaps.svg", "energy.svg", "trace.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn readme_config_example_parses() {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```toml\n").expect("toml block") + "```toml\n".len();
    let body = &readme[start..];
    let body = &body[..body.find("```").unwrap()];
    let s = vrmerge_cli::parse_scenario_str(body, "README.md").unwrap();
    assert_eq!(s.vehicles.mainline.len() + s.vehicles.ramp.len(), 12);
    assert!(s.lateral.is_some());
}
