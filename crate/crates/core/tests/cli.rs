use std::fs;
use std::process::{Command, Output};

fn colearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_colearn")).args(args).output().unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(colearn(&["--help"]).status.code(), Some(0));
    assert_eq!(colearn(&["nonsense"]).status.code(), Some(1));
    assert_eq!(colearn(&["bounds", "--n", "abc"]).status.code(), Some(1));
    let out = colearn(&["bounds", "--p", "0.5,0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("best arm"));
}

#[test]
fn bounds_to_stdout() {
    let out = colearn(&["bounds", "--n", "1000"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let t1 = v["bounds"]["theorem1_lower"].as_f64().unwrap();
    assert!((t1 - 0.974_709_419_952_179_9).abs() < 1e-12);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"params": {"n": 40, "mu": 0.3, "p": [0.9, 0.5]}, "trials": 25, "master_seed": 4}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = colearn(&[
        "learnability",
        "--config",
        cfg.to_str().unwrap(),
        "--trials",
        "30",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let est: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("estimates.json")).unwrap()).unwrap();
    let rec = &est[0];
    for key in ["experiment", "params", "point", "ci", "n", "bound", "vacuous_flag", "seed"] {
        assert!(rec.get(key).is_some(), "missing {key}");
    }
    assert_eq!(rec["experiment"], "learnability");
    assert_eq!(rec["params"]["n"], 40);
    assert_eq!(rec["params"]["mu"], 0.3);
    assert_eq!(rec["seed"], 4);
    assert_eq!(rec["n"], 30);
}

#[test]
fn config_for_other_experiment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"experiment": "deviation"}"#).unwrap();
    assert_eq!(colearn(&["bounds", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    fs::write(&cfg, r#"{"unknown_field": 1}"#).unwrap();
    assert_eq!(colearn(&["bounds", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn trajectory_and_simulate_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = colearn(&["trajectory", "--horizon", "20", "--seed", "1", "--out", d, "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ode = fs::read_to_string(dir.path().join("trajectory_ode.csv")).unwrap();
    let mut lines = ode.lines();
    assert_eq!(lines.next(), Some("t,y0,y1,y2"));
    assert_eq!(lines.next(), Some("0,1,0,0"));
    let sim = fs::read_to_string(dir.path().join("trajectory_sim_0.csv")).unwrap();
    for row in sim.lines().skip(1) {
        let sum: f64 = row.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
    assert!(dir.path().join("theorem2_bound.csv").exists());
    assert!(dir.path().join("report.csv").exists());

    let sim_dir = dir.path().join("sim");
    let out = colearn(&["simulate", "--mode", "agents", "--n", "30", "--out", sim_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let events = fs::read_to_string(sim_dir.join("events.csv")).unwrap();
    assert!(events.starts_with("event_index,time,kind,from_class,to_class\n"));
    let header: serde_json::Value = serde_json::from_str(&fs::read_to_string(sim_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(header["mode"], "agents");
    assert!(header["terminal_reason"].get("absorbed").is_some());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let base = ["couple-verify", "--n", "50", "--trials", "40", "--seed", "9", "--out"];
    let mut args_a = base.to_vec();
    args_a.extend([a.to_str().unwrap(), "--workers", "1"]);
    let mut args_b = base.to_vec();
    args_b.extend([b.to_str().unwrap(), "--workers", "3"]);
    assert!(colearn(&args_a).status.success());
    assert!(colearn(&args_b).status.success());
    for name in ["estimates.json", "report.json", "coupled_walk_0.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}
