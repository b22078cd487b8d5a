use std::fs;
use std::path::Path;
use std::process::Command;

const GOLDEN: &str = r#"
engine = "mps"
seed = 7
n_traj = 3

[lattice]
kind = "square"
lx = 4
ly = 4

[layout]
theta_spin = 0.9
theta_coupling = 0.9
outcomes = "random"
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clusterbound"))
}

fn run_config(dir: &Path, text: &str, sub: &str) -> std::process::Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, text).unwrap();
    bin().arg(sub).arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")).output().unwrap()
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir.join("out"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn golden_mps_run_writes_documented_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(dir.path(), GOLDEN, "run");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = artifacts(dir.path());
    assert_eq!(files.len(), 2);
    let rows = files.iter().find(|f| f.0.ends_with("-rows.csv")).unwrap();
    assert!(rows.0.starts_with("mps-") && rows.0.contains("-s7-"));
    let text = String::from_utf8(rows.1.clone()).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "lattice,engine,Lx,Ly,trajectory,seed,row,max_bond,discarded_weight,log_norm_delta,S2_half"
    );
    let ent = files.iter().find(|f| f.0.ends_with("-entropy.csv")).unwrap();
    let text = String::from_utf8(ent.1.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), "lattice,engine,Lx,Ly,trajectory,seed,cut,entropy");
    assert_eq!(text.lines().count(), 1 + 3 * 3);
}

#[test]
fn rerun_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_config(a.path(), GOLDEN, "run").status.success());
    assert!(run_config(b.path(), GOLDEN, "run").status.success());
    assert_eq!(artifacts(a.path()), artifacts(b.path()));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let born = GOLDEN.replace("outcomes = \"random\"", "outcomes = \"born\"");
    assert_eq!(run_config(dir.path(), &born, "run").status.code(), Some(2));
    let periodic = GOLDEN.replace("ly = 4", "ly = 4\nperiodic = true");
    assert_eq!(run_config(dir.path(), &periodic, "run").status.code(), Some(2));
    assert_eq!(run_config(dir.path(), "engine = \"mps\"\nnope = 1\n", "run").status.code(), Some(2));
    assert_eq!(run_config(dir.path(), GOLDEN, "sweep").status.code(), Some(2));
}

#[test]
fn stabilizer_sweep_and_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
engine = "stabilizer"
seed = 3
n_traj = 20

[lattice]
kind = "lieb"
lx = 4
ly = 8
bottom = "rough"
periodic = true

[stabilizer]
x_vertex = true

[sweep]
sizes = [8, 12, 16]
line = { vary = "p_x", rest = "p_z", from = 0.3, to = 0.7, steps = 5 }
mi_divisor = 4
"#;
    let out = run_config(dir.path(), text, "sweep");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = artifacts(dir.path());
    let scaling = files.iter().find(|f| f.0.ends_with("-scaling.csv")).unwrap();
    let body = String::from_utf8(scaling.1.clone()).unwrap();
    assert_eq!(body.lines().next().unwrap(), clusterbound::stabilizer::SCALING_HEADER);
    assert_eq!(body.lines().count(), 1 + 2 * 3 * 5);
    let traj = files.iter().find(|f| f.0.ends_with("-trajectories.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&traj.1).lines().count(), 1 + 3 * 5 * 20);
    let out = bin().arg("collapse").arg(dir.path().join("out").join(&scaling.0)).output().unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let p_c = report["result"]["p_c"].as_f64().unwrap();
    assert!((0.3..=0.7).contains(&p_c));
}

#[test]
fn verify_reports_are_json() {
    let out = bin().args(["verify", "povm"]).output().unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["suite"], "povm");
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["value"].is_number() && c["bound"].is_number()));
    assert_eq!(bin().args(["verify", "nonsense"]).output().unwrap().status.code(), Some(2));
}
