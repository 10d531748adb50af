use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[simulation]
alpha = 0.9
hurst = 0.7
t_end = 1.0
steps = 128
modes = 16
paths = 2000
seed = 3

[domain]
kind = "interval"
length = 1.0

[source]
f = [1.0, -0.5, 0.25]
g = [1.0, 0.5, -0.25]
c_h = 0.5
h = { kind = "exponential", a = 1.0, rate = -0.5 }

[inverse]
k_cut = 3
"#;

fn sfde(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfde"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn setup(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), text).unwrap();
    dir
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn full_pipeline_writes_stamped_artifacts() {
    let d = setup(CONFIG);
    let p = d.path();
    for cmd in ["simulate", "reconstruct", "instability"] {
        let out = sfde(&[cmd, "--config", "run.toml"], p);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = p.join("out");
    let moments = read(&out, "ensemble_moments.csv");
    let stamp = moments.lines().next().unwrap().to_string();
    assert!(stamp.starts_with("# seed=3,config_hash="), "{stamp}");
    assert_eq!(moments.lines().nth(1), Some("k,lambda,mean,se_mean,var,se_var"));
    assert_eq!(moments.lines().count(), 2 + 16);
    for f in ["covariance.csv", "reconstruction.csv", "instability.csv"] {
        assert_eq!(read(&out, f).lines().next().unwrap(), stamp, "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&read(&out, "run_summary.json")).unwrap();
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["config"]["simulation"]["paths"], 2000);
    let rec: serde_json::Value = serde_json::from_str(&read(&out, "reconstruction.json")).unwrap();
    assert_eq!(rec["report"]["k_cut"], 3);
    // Values are printed with 17 significant digits.
    let row = moments.lines().nth(2).unwrap();
    let mean = row.split(',').nth(2).unwrap();
    assert_eq!(mean.split('e').next().unwrap().replace(['-', '.'], "").len(), 17, "{mean}");
}

#[test]
fn reruns_are_byte_identical() {
    let d = setup(CONFIG);
    let p = d.path();
    for (dir, threads) in [("a", "1"), ("b", "2")] {
        for cmd in ["simulate", "reconstruct"] {
            let out = sfde(&[cmd, "--config", "run.toml", "--out-dir", dir, "--threads", threads], p);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
    }
    for f in ["ensemble_moments.csv", "covariance.csv", "run_summary.json", "reconstruction.csv", "reconstruction.json"] {
        assert_eq!(read(&p.join("a"), f), read(&p.join("b"), f), "{f}");
    }
}

#[test]
fn flags_override_the_file() {
    let d = setup(CONFIG);
    let p = d.path();
    let out = sfde(&["simulate", "--config", "run.toml", "--seed", "11", "--out-dir", "s11"], p);
    assert!(out.status.success());
    assert!(read(&p.join("s11"), "ensemble_moments.csv").starts_with("# seed=11,"));
    let out = sfde(&["instability", "--config", "run.toml", "--gamma", "0.3", "--out-dir", "g"], p);
    assert!(out.status.success());
    let text = read(&p.join("g"), "instability.csv");
    let gamma = text.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(gamma.trim_start_matches("# gamma=").parse::<f64>().unwrap(), 0.3);
}

#[test]
fn hypothesis_violation_exits_with_2() {
    let d = setup(&CONFIG.replace("hurst = 0.7", "hurst = 0.05"));
    let out = sfde(&["simulate", "--config", "run.toml"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha + H > 1"));
}

#[test]
fn missing_lower_bound_exits_with_2() {
    let d = setup(&CONFIG.replace("c_h = 0.5\n", ""));
    let out = sfde(&["simulate", "--config", "run.toml"], d.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("c_h"));
    // A bound above min h is rejected as well.
    let d = setup(&CONFIG.replace("c_h = 0.5", "c_h = 0.9"));
    assert_eq!(sfde(&["simulate", "--config", "run.toml"], d.path()).status.code(), Some(2));
}

#[test]
fn malformed_moments_are_config_errors() {
    let d = setup(CONFIG);
    let p = d.path();
    fs::write(p.join("bad.csv"), "k,lambda,mean\n1,2,3\n").unwrap();
    let out = sfde(&["reconstruct", "--config", "run.toml", "--moments", "bad.csv"], p);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn quick_selftest_passes() {
    let d = tempfile::tempdir().unwrap();
    let out = sfde(&["selftest"], d.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}
