use std::fs;
use std::path::Path;

use graphflow::diagnostics::read_timeseries;
use graphflow_cli::{parse_config, run_cli};

const CONSTANT: &str = "\
[manifold]
sigma1 = torus
n = 2
periods1 = 2pi, 2pi
sigma2 = torus
periods2 = 2pi, 2pi

[grid]
resolution = 16

[flow]
t_max = 1

[initial]
map = constant
point = 0.5, 1.0
";

const SMALL_AFFINE: &str = "\
[manifold]
sigma1 = torus
n = 2
periods1 = 2pi, 2pi
sigma2 = torus
periods2 = pi, 0.6pi

[grid]
resolution = 16

[flow]
t_max = 1
monitor_interval = 5

[initial]
map = perturbed-affine
matrix = diag(0.5, 0.3)
epsilon = 0.2

[output]
snapshot_interval = 10
";

fn invoke(dir: &Path, cfg: &str, extra: &[&str]) -> (i32, String, String) {
    let path = dir.join("run.cfg");
    fs::write(&path, cfg).unwrap();
    let out_dir = dir.join("out");
    let mut argv = vec![
        "graphflow".to_string(),
        "--config".into(),
        path.to_string_lossy().into_owned(),
        "--out-dir".into(),
        out_dir.to_string_lossy().into_owned(),
    ];
    argv.extend(extra.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn constant_map_exits_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, out, err) = invoke(tmp.path(), CONSTANT, &[]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("stopped: A-norm threshold"));
    let summary = fs::read_to_string(tmp.path().join("out/summary.txt")).unwrap();
    assert!(summary.starts_with("status = ok\nstop_reason = A-norm threshold\nsteps = 0\n"));
    assert!(tmp.path().join("out/final.txt").exists());
    assert!(!tmp.path().join("out/snap_00000000.txt").exists());
}

#[test]
fn outputs_follow_the_intervals() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = invoke(tmp.path(), SMALL_AFFINE, &["--max-steps", "30", "--quiet", "--verify"]);
    assert_eq!(code, 0, "{err}");
    let dir = tmp.path().join("out");
    let rows = read_timeseries(&fs::read(dir.join("timeseries.csv")).unwrap()[..]).unwrap();
    assert_eq!(rows.len(), 7);
    assert!(rows[0].residual_44.is_some());
    for s in [0, 10, 20, 30] {
        assert!(dir.join(format!("snap_{s:08}.txt")).exists(), "{s}");
    }
    assert!(!dir.join("snap_00000005.txt").exists());
    let summary = fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(summary.contains("stop_reason = max steps"));
    let echoed = fs::read_to_string(dir.join("config.txt")).unwrap();
    assert_eq!(parse_config(&echoed).unwrap().initial.name(), "perturbed-affine");
}

#[test]
fn refusal_exits_2_and_keeps_last_good() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SMALL_AFFINE.replace("diag(0.5, 0.3)", "diag(2, 1)").replace("pi, 0.6pi", "2pi, 2pi");
    let (code, _, err) = invoke(tmp.path(), &cfg, &["--quiet"]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error [flow: initial data]:"), "{err}");
    assert!(err.contains("1 − |λ₁λ₂| > 0"));
    let dir = tmp.path().join("out");
    assert!(dir.join("last_good.txt").exists());
    assert!(!dir.join("final.txt").exists());
    let summary = fs::read_to_string(dir.join("summary.txt")).unwrap();
    assert!(summary.starts_with("status = refused\n"));
}

#[test]
fn bad_config_lists_every_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = CONSTANT.replace("n = 2", "n = two").replace("t_max = 1", "t_max = -1");
    let (code, _, err) = invoke(tmp.path(), &cfg, &[]);
    assert_eq!(code, 1);
    let lines: Vec<&str> = err.lines().collect();
    assert!(lines.len() >= 2, "{err}");
    assert!(lines.iter().all(|l| l.starts_with("error [config]:")));
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("line 12"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn missing_config_flag_prints_usage() {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_cli(["graphflow"], &mut out, &mut err);
    assert_eq!(code, 1);
    assert!(String::from_utf8(err).unwrap().contains("Usage"));
    let code = run_cli(["graphflow", "--help"], &mut out, &mut Vec::new());
    assert_eq!(code, 0);
    assert!(String::from_utf8(out).unwrap().contains("--config"));
}

#[test]
fn unreadable_config_is_a_config_error() {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_cli(["graphflow", "--config", "/nonexistent/x.cfg"], &mut out, &mut err);
    assert_eq!(code, 1);
    assert!(String::from_utf8(err).unwrap().starts_with("error [config]: cannot read"));
}
