use std::path::Path;
use std::process::{Command, Output};

use mep_core::config::load_mdp;
use mep_core::soft::{solve_fixed_point, SoftOperator, SoftPlanConfig};

const TINY: &str = r#"
n_states = 3
n_actions = 2
gamma = 0.9
terminal = [2]
transition = [
  [0, 0, 1, 1.0, 1.0],
  [0, 1, 2, 0.5, 3.0],
  [0, 1, 0, 0.5, 3.0],
  [1, 0, 2, 1.0, 1.0],
  [1, 1, 0, 1.0, 0.5],
]
"#;

fn mep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mep")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mep(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn solve_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("out");
    ok(&["solve", "--config", &model, "--beta", "4", "--operator", "t-bar", "--out-dir", out.to_str().unwrap()]);

    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    let got: Vec<f64> = serde_json::from_value(json["free_energy"].clone()).unwrap();
    let mdp = load_mdp(Path::new(&model)).unwrap();
    let want = solve_fixed_point(SoftOperator::TBar, &mdp, &SoftPlanConfig::new(4.0, 0.9)).unwrap().value;
    for (a, b) in got.iter().zip(want.values()) {
        assert!((a - b).abs() < 1e-9, "{got:?} vs {want:?}");
    }
}

#[test]
fn validate_flags_undiscounted_models_without_a_proper_policy() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", TINY);
    assert!(ok(&["validate", "--config", &good]).starts_with("ok"));

    let trapped = TINY.replace("gamma = 0.9", "gamma = 1.0").replace("[1, 0, 2, 1.0, 1.0]", "[1, 0, 1, 1.0, 1.0]").replace("[0, 1, 2, 0.5, 3.0],\n  [0, 1, 0, 0.5, 3.0]", "[0, 1, 0, 1.0, 3.0]");
    let bad = write(dir.path(), "bad.toml", &trapped);
    let out = mep(&["validate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("violation"));
}

#[test]
fn validate_export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let export = dir.path().join("chain.toml");
    let problem = write(dir.path(), "p.toml", "[environment]\nkind = \"double_chain\"\n");
    ok(&["validate", "--config", &problem, "--export", export.to_str().unwrap()]);
    let mdp = load_mdp(&export).unwrap();
    assert_eq!((mdp.n_states(), mdp.n_actions()), (9, 2));
    ok(&["validate", "--config", export.to_str().unwrap()]);
}

#[test]
fn learn_writes_a_metric_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let stdout = ok(&[
        "learn", "--algo", "soft_q", "--episodes", "30", "--sigma", "0.05", "--seed", "3", "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("soft_q"));
    let csv = std::fs::read_to_string(out.join("soft_q.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "run,episode,beta,delta_v_pct,policy_entropy,steps");
    assert_eq!(lines.count(), 30);
}

#[test]
fn bench_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bench.toml",
        r#"
name = "repro"
runs = 3

[environment]
kind = "double_chain"

[experiment]
kind = "learning"
algorithms = ["mep", "q", "double_q"]

[experiment.learn]
episodes = 40
"#,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["bench", "--config", &cfg, "--out-dir", a.to_str().unwrap()]);
    ok(&["bench", "--config", &cfg, "--out-dir", b.to_str().unwrap(), "--algo", "mep,q,double_q"]);
    for name in ["mep.csv", "q.csv", "double_q.csv", "mep_mean.csv", "curves.gp"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    for l in summary["learners"].as_array().unwrap() {
        let e = l["epr_median"].as_f64().unwrap();
        assert!(e > 0.0 && e <= 100.0);
    }
}

#[test]
fn bench_algo_filter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bench.toml",
        "name = \"f\"\nruns = 1\n[environment]\nkind = \"double_chain\"\n[experiment]\nkind = \"learning\"\nalgorithms = [\"mep\", \"q\"]\n[experiment.learn]\nepisodes = 5\n",
    );
    let out = dir.path().join("out");
    ok(&["bench", "--config", &cfg, "--algo", "q", "--out-dir", out.to_str().unwrap()]);
    assert!(out.join("q.csv").exists());
    assert!(!out.join("mep.csv").exists());
}

#[test]
fn bench_requires_a_config() {
    assert!(!mep(&["bench"]).status.success());
}

const LINE_PROBLEM: &str = r#"
[environment]
kind = "small_cell"

[environment.spec]
users = [[0.0], [0.1], [0.9], [1.0]]
base_station = [0.5]
n_facilities = 1
mode = { kind = "deterministic" }
gamma = 1.0
"#;

#[test]
fn param_solve_and_learn_on_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write(dir.path(), "line.toml", LINE_PROBLEM);
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    ok(&["param-solve", "--config", &problem, "--tau", "1.2", "--out-dir", o]);
    let solved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("param_solve.json")).unwrap()).unwrap();
    // all sources weighted: Σ(u - f)² + 5 (f - 0.5)² is minimised at f = 0.5
    let f = solved["facilities"][0][0].as_f64().unwrap();
    assert!((f - 0.5).abs() < 1e-3, "{f}");
    assert!(out.join("trace.csv").exists());

    ok(&["param-learn", "--config", &problem, "--tau", "1.5", "--episodes", "30", "--seed", "1", "--out-dir", o]);
    let learned: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("param_learn.json")).unwrap()).unwrap();
    assert!(learned["total_cost"].as_f64().unwrap().is_finite());
}
