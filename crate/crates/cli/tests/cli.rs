use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kinex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_writes_snapshots_manifest_and_moments() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = kinex(&[
        "simulate", "--model", "mixed", "--mu", "0.5", "--n", "2000", "--days", "20",
        "--record-every", "10", "--seed", "7", "--histogram-bins", "40", "--out", out,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let snaps = csv(&dir.path().join("snapshots.csv"));
    assert_eq!(snaps[0], ["day", "agent_id", "wealth"]);
    assert_eq!(snaps.len(), 1 + 3 * 2000);
    let hist = csv(&dir.path().join("histogram.csv"));
    assert_eq!(hist[0], ["day", "bin_left", "bin_right", "count"]);
    assert_eq!(hist.len(), 1 + 3 * 40);
    let moments = csv(&dir.path().join("moments.csv"));
    assert_eq!(moments[0], ["day", "k", "M_empirical", "M_closed_form"]);
    let m2: f64 = moments.iter().find(|r| r[0] == "20" && r[1] == "2").unwrap()[3].parse().unwrap();
    assert_eq!(m2, 2.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["N"], 2000);
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["mu"], 0.5);
}

#[test]
fn simulate_runs_reproduce_bit_for_bit() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = kinex(&[
            "simulate", "--model", "drm", "--n", "500", "--days", "15", "--init", "uniform:0:2",
            "--seed", "3", "--out", d.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("snapshots.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn invalid_parameters_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        &["simulate", "--model", "mixed", "--mu", "1.5", "--out", out][..],
        &["simulate", "--model", "mixed", "--out", out],
        &["simulate", "--model", "ie", "--n", "7", "--out", out],
        &["evolve", "--model", "ie", "--init", "triangle:1", "--out", out],
        &["evolve", "--model", "ie", "--init", "uniform:2:1", "--out", out],
        &["moments", "--mus", "0.5,1.2", "--out", out],
        &["verify", "--only", "no-such-criterion"],
        &["simulate", "--model", "nope"],
    ] {
        assert_eq!(code(&kinex(args)), 2, "{args:?}");
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = kinex(&["moments", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn evolve_exit_codes_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["evolve", "--model", "ie", "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        (code(&kinex(&args)), out)
    };

    let (c, out) = run("uniform", &["--init", "uniform:0:2", "--tol", "1e-6"]);
    assert_eq!(c, 0);
    let trace = csv(&out.join("trace.csv"));
    assert_eq!(trace[0], ["t", "m1", "m_alpha", "ks_consecutive", "ks_to_target", "mass_leak"]);
    let ks: f64 = trace.last().unwrap()[4].parse().unwrap();
    assert!(ks < 5e-3);
    assert!(trace.len() - 1 <= 61);
    assert_eq!(csv(&out.join("density.csv"))[0], ["x", "p"]);

    let (c, out) = run("fixed", &["--init", "gamma2:1"]);
    assert_eq!(c, 0);
    assert_eq!(csv(&out.join("trace.csv")).len(), 3, "header, t = 0 and one step");

    assert_eq!(run("short", &["--init", "uniform:0:2", "--max-steps", "3"]).0, 4);
    let (c, out) = run("leak", &["--init", "uniform:0:2", "--grid-xmax", "4"]);
    assert_eq!(c, 5);
    assert!(out.join("trace.csv").exists());
}

#[test]
fn evolve_directed_market_approaches_gamma_half() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinex(&[
        "evolve", "--model", "drm", "--init", "exp:1", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let trace = csv(&dir.path().join("trace.csv"));
    let first: f64 = trace[1][4].parse().unwrap();
    let last: f64 = trace.last().unwrap()[4].parse().unwrap();
    assert!(last < 5e-3 && last < first, "{first} -> {last}");
}

#[test]
fn evolve_reads_a_density_file() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    assert_eq!(
        code(&kinex(&[
            "evolve", "--model", "ie", "--init", "exp:1", "--max-steps", "2",
            "--out", first.to_str().unwrap(),
        ])),
        4
    );
    let init = format!("file:{}", first.join("density.csv").display());
    let second = dir.path().join("b");
    let o = kinex(&["evolve", "--model", "ie", "--init", &init, "--out", second.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn moment_sweep() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&kinex(&["moments", "--out", dir.path().to_str().unwrap()])), 0);
    let rows = csv(&dir.path().join("moments.csv"));
    assert_eq!(rows[0], ["mu", "k", "M_mixed", "M_gamma_fit", "gap", "alpha_fit", "alpha_heinsalu"]);
    assert_eq!(rows.len(), 1 + 11 * 4);
    for r in &rows[1..] {
        let mu: f64 = r[0].parse().unwrap();
        let gap: f64 = r[4].parse().unwrap();
        if r[1] != "4" || mu == 0.0 || mu == 1.0 {
            assert!(gap.abs() < 1e-12, "{r:?}");
        } else {
            assert!(gap < 0.0, "{r:?}");
        }
    }
    let half = rows.iter().find(|r| r[0] == "0.5" && r[1] == "1").unwrap();
    assert_eq!(half[5].parse::<f64>().unwrap(), 1.0);
    assert_eq!(half[6].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn contraction_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = kinex(&["contraction", "--steps", "4", "--grid-n", "1024", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rows = csv(&dir.path().join("contraction.csv"));
    assert_eq!(rows[0], ["pair_id", "t", "d_alpha_t", "ratio", "bound"]);
    assert_eq!(rows.len(), 1 + 5 * 5);
    for r in rows[1..].iter().filter(|r| !r[3].is_empty()) {
        assert!(r[3].parse::<f64>().unwrap() <= 0.81);
    }
}

#[test]
fn verify_reports_json_and_gates_on_failures() {
    let o = kinex(&["verify", "--only", "contraction,oracle"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], true);
    let ids: Vec<u64> = report["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [4, 10]);

    let o = kinex(&["verify", "--only", "1", "--tol", "0"]);
    assert_eq!(code(&o), 1);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["passed"], false);
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nn = 100\ndays = 3\nseed = 11\n").unwrap();
    let out = dir.path().join("o");
    let o = kinex(&[
        "--config", cfg.to_str().unwrap(), "simulate", "--model", "ie", "--days", "5",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["N"], 100);
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["days"], 5);
}
