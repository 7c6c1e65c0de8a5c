use std::path::Path;
use std::process::{Command, Output};

const DEFAULT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/config/default.toml");

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bidomain"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

/// The shipped config on a coarse mesh.
fn coarse_config(dir: &Path) -> String {
    let text = std::fs::read_to_string(DEFAULT).unwrap().replace("h = 0.1", "h = 0.2");
    write_config(dir, &text)
}

#[test]
fn verify_on_the_default_config_passes_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--config", DEFAULT], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report = std::fs::read_to_string(dir.path().join("verify_report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "criterion_id,status,value,tolerance");
    assert_eq!(lines.len(), 13);
    for (i, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], (i + 1).to_string());
        assert_eq!(fields[1], "pass");
    }
}

#[test]
fn verify_subset_honours_the_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify", "--criteria", "3,6", "--seed", "7"], dir.path());
    assert!(out.status.success());
    let report = std::fs::read_to_string(dir.path().join("verify_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let bad = run(&["verify", "--criteria", "13"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn every_demo_runs_on_a_coarse_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = coarse_config(dir.path());
    for (cmd, artifact) in [
        ("mesh", "mesh.txt"),
        ("neumann-demo", "neumann_solution.csv"),
        ("cauchy-sweep", "cauchy_sweep.csv"),
        ("nullspace-demo", "residuals.json"),
        ("existence-check", "existence.json"),
        ("supplement-solve", "supplement.csv"),
        ("cardio-operator", "cardio.json"),
        ("elasticity-demo", "elastic_u_i.csv"),
        ("parabolic-demo", "probe.csv"),
    ] {
        let out = run(&[cmd, "--config", &cfg], dir.path());
        assert!(out.status.success(), "{cmd}: {}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join(artifact).exists(), "{cmd} wrote no {artifact}");
    }
    let residuals: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("residuals.json")).unwrap()).unwrap();
    for key in ["r6", "r7", "r8", "r9", "r10", "r11", "r12", "existence_condition", "calibration_residual"] {
        assert!(residuals[key].is_number(), "{key}");
    }
    let sweep = std::fs::read_to_string(dir.path().join("cauchy_sweep.csv")).unwrap();
    assert!(sweep.starts_with("lambda,misfit,recovery_error\n"));
    let probe = std::fs::read_to_string(dir.path().join("probe.csv")).unwrap();
    assert!(probe.starts_with("amplitude,probe_value\n"));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,vertex_index,value\n"));
}

#[test]
fn vanishing_prefactor_is_identically_satisfied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[geometry]\nh = 0.2\n[coefficients]\nalpha_i = 2.0\nalpha_e = 1.0\nbeta_e = -1.0\nbeta_i = 0.5\n",
    );
    let out = run(&["existence-check", "--config", &cfg], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("identically satisfied"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("existence.json")).unwrap()).unwrap();
    assert_eq!(v["value"].as_f64(), Some(0.0));
    assert_eq!(v["status"], "identically satisfied");

    // ECG coefficients with a nonzero flux violate it
    let cfg = write_config(dir.path(), "[geometry]\nh = 0.2\n");
    let out = run(&["existence-check", "--config", &cfg], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("violated"));
}

#[test]
fn swapped_radii_name_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[geometry]\nr_inner = 3.0\nr_outer = 2.0\nh = 0.1\n");
    let out = run(&["mesh", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry.r_inner"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[geometry]\nr_inner = 1.0\nradius = 2.0\n");
    let out = run(&["mesh", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radius"));

    let cfg = write_config(dir.path(), "[cable]\ndt = -1.0\n");
    let out = run(&["parabolic-demo", "--config", &cfg], dir.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cable.dt"));
}

#[test]
fn anisotropic_tensors_are_accepted_where_meaningful() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[geometry]\nh = 0.2\n[conductivities]\nsigma_i = { m11 = 1.5, m12 = 0.3, m22 = 0.8 }\nsigma_b = { m11 = 2.0, m12 = -0.2, m22 = 1.0 }\n",
    );
    assert!(run(&["neumann-demo", "--config", &cfg], dir.path()).status.success());
    assert!(run(&["cauchy-sweep", "--config", &cfg], dir.path()).status.success());
    // the disk oracle needs scalar conductivities
    let out = run(&["supplement-solve", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("conductivities.sigma_i"));
}

#[test]
fn outputs_are_bit_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = coarse_config(dir.path());
    let mut runs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        for cmd in ["cauchy-sweep", "nullspace-demo", "parabolic-demo"] {
            assert!(run(&[cmd, "--config", &cfg, "--seed", "11"], &out).status.success());
        }
        runs.push(out);
    }
    for name in ["cauchy_sweep.csv", "u_i.csv", "trajectory.csv", "probe.csv", "residuals.json"] {
        let a = std::fs::read(runs[0].join(name)).unwrap();
        let b = std::fs::read(runs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}
