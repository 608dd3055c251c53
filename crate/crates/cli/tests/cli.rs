use std::path::Path;
use std::process::{Command, Output};

fn noma_sim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noma-sim"))
        .args(args)
        .current_dir(dir)
        .env_remove("NOMA_SIM_WORKERS")
        .output()
        .expect("binary runs")
}

const SMALL: &str = r#"
[network]
slots = 4
devices = [8, 8]

[traffic]
lambda = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]

[access]
scheme = "B"
detection = "table"
table_overflow = "clamp"

[run]
frames = 1000
replications = 3
window = 250
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("spec.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_one_row_per_lambda_and_replication() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = noma_sim(&["simulate", "--config", &cfg, "--out", "run.csv", "--workers", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# command=simulate"));
    assert_eq!(lines.len(), 2 + 30);
    assert!(dir.path().join("run.svg").exists());
    // Sorted by λ, then replication.
    let lambdas: Vec<f64> = lines[2..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(lambdas.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn output_is_byte_identical_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = noma_sim(&["simulate", "--config", &cfg, "--workers", "1"], dir.path());
    let b = Command::new(env!("CARGO_BIN_EXE_noma-sim"))
        .args(["simulate", "--config", &cfg, "--workers", "1"])
        .current_dir(dir.path())
        .env("NOMA_SIM_WORKERS", "3")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn seed_flag_changes_results_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = noma_sim(&["simulate", "--config", &cfg, "--seed", "5"], dir.path());
    let b = noma_sim(&["simulate", "--config", &cfg, "--seed", "6"], dir.path());
    assert_ne!(a.stdout, b.stdout);
    let frames = noma_sim(&["simulate", "--config", &cfg, "--frames", "500"], dir.path());
    let text = String::from_utf8(frames.stdout).unwrap();
    assert!(text.lines().nth(2).unwrap().contains(",500,"));
}

#[test]
fn config_errors_exit_with_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[traffic]\nlambda = [1.5]\n");
    let out = noma_sim(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("traffic.lambda"));

    let cfg = write_config(dir.path(), "[run]\nframez = 3\n");
    let out = noma_sim(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.framez"));

    let out = noma_sim(&["simulate", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn table_overflow_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[traffic]\nlambda = [1.0]\n[access]\nscheme = \"WAC\"\ndetection = \"table\"\n[run]\nframes = 1000\n",
    );
    let out = noma_sim(&["simulate", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("physical"));
}

#[test]
fn every_subcommand_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{SMALL}\n[benchmark]\ngrid_step = 0.45\neval_frames = 200\n[phy_table]\nn_max = 1\nsamples = 10000\n[calibrate]\nsamples = 10000\n"),
    );
    for (cmd, rows) in [("benchmark", 10), ("phy-table", 8), ("convergence", 40), ("calibrate", 1)] {
        let out = noma_sim(&[cmd, "--config", &cfg, "--frames", "1000"], dir.path());
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().count(), 2 + rows, "{cmd}");
    }
}

#[test]
fn policy_snapshots_round_trip_as_warm_start() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[traffic]\nlambda = [0.6]\n[access]\nscheme = \"B\"\ndetection = \"table\"\ntable_overflow = \"clamp\"\n[run]\nframes = 2000\npolicy_out = \"policies\"\n",
    );
    let out = noma_sim(&["simulate", "--config", &cfg], dir.path());
    assert!(out.status.success());
    let snap = dir.path().join("policies/policy_lambda0.6_rep0.csv");
    assert!(snap.exists());
    let cfg = write_config(
        dir.path(),
        &format!(
            "[traffic]\nlambda = [0.6]\n[access]\nscheme = \"B\"\ndetection = \"table\"\ntable_overflow = \"clamp\"\n[run]\nframes = 2000\nwarm_start = \"{}\"\n",
            snap.display()
        ),
    );
    let out = noma_sim(&["simulate", "--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn shipped_configs_run() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    let mut seen = 0;
    for entry in std::fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = noma_sim(&["--config", path.to_str().unwrap(), "--frames", "200", "simulate"], dir.path());
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}
