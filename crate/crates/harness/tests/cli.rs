use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn polaron(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polaron"))
        .args(args)
        .args(["--output.dir", dir.to_str().unwrap()])
        .output()
        .unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap_or("")).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn malformed_config_exits_with_usage_status_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[dynamics]\ncadence = \"often\"\n").unwrap();
    let out = polaron(dir.path(), &["simulate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["key"], "dynamics.cadence");

    let out = polaron(dir.path(), &["simulate", "--no-such-key", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["key"], "no_such_key");
}

#[test]
fn empty_coupling_list_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = polaron(dir.path(), &["effective-mass", "--alphas", "[]"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["key"], "physics.alphas");
}

#[test]
fn rescaled_coupling_scales_the_energy_quadratically() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    assert!(polaron(&one, &["solve-pekar", "--preset", "desk", "--hessian", "false"]).status.success());
    let out = polaron(&two, &["solve-pekar", "--coupling-scale", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = read_json(one.join("solve-pekar/radial.json"));
    let b = read_json(two.join("solve-pekar/radial.json"));
    let (ea, eb) = (a["e_p"].as_f64().unwrap(), b["e_p"].as_f64().unwrap());
    assert!((eb / ea / 4.0 - 1.0).abs() < 1e-6, "{ea} {eb}");
    assert!((a["mu_over_e"].as_f64().unwrap() - 3.0).abs() < 3e-5);
    assert_eq!(a["config_hash"], read_json(one.join("solve-pekar/manifest.json"))["config_hash"]);
    let header = read_json(one.join("solve-pekar/psi_p.json"));
    assert_eq!(header["config_hash"], a["config_hash"]);
    let psi = polaron_core::spectral::snapshot::read_snapshot(&one.join("solve-pekar/psi_p.bin")).unwrap();
    assert_eq!(psi.grid().points, 32);
    let inv = read_json(one.join("solve-pekar/invariants.json"));
    assert!(inv["sandwich"]["inverse_image_residual"].as_f64().unwrap() < 1e-3);
}

#[test]
fn effective_mass_matches_the_prediction_at_unit_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let out = polaron(dir.path(), &["effective-mass", "--preset", "desk", "--alphas", "[0, 1]"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let mass = read_json(dir.path().join("effective-mass/mass.json"));
    let reports = mass["reports"].as_array().unwrap();
    assert_eq!(reports[0]["m_eff_pred"].as_f64().unwrap(), 0.5);
    for r in reports {
        let fit = r["fit_standard"]["mass"].as_f64().unwrap();
        let pred = r["m_eff_pred"].as_f64().unwrap();
        assert!((fit / pred - 1.0).abs() < 5e-3);
    }
    let csv = std::fs::read_to_string(dir.path().join("effective-mass/mass.csv")).unwrap();
    assert!(csv.starts_with("alpha,m_eff_pred,"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn runs_are_reproducible_from_their_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let args = ["simulate", "--alphas", "[1]", "--velocities", "[0, 0.001]", "--t-end", "0.5", "--dt", "0.01", "--cadence", "10"];
    let out = polaron(&first, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let manifest = first.join("simulate/manifest.json");
    let m = read_json(&manifest);
    assert_eq!(m["status"], "passed");
    let second = dir.path().join("second");
    assert!(polaron(&second, &["simulate", manifest.to_str().unwrap()]).status.success());
    for name in ["series_a1_v0.csv", "series_a1_v0.001.csv"] {
        let a = std::fs::read(first.join("simulate").join(name)).unwrap();
        let b = std::fs::read(second.join("simulate").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let listed: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(listed.contains(&"series_a1_v0.csv") && listed.contains(&"simulate.json"));
    let manifests = std::fs::read_dir(first.join("simulate")).unwrap().filter(|e| e.as_ref().unwrap().file_name() == "manifest.json").count();
    assert_eq!(manifests, 1);
}

#[test]
fn resting_polaron_damping_run_has_zero_velocities() {
    let dir = tempfile::tempdir().unwrap();
    let out = polaron(dir.path(), &["damping", "--alphas", "[1]", "--velocities", "[0]", "--t-end", "1", "--dt", "0.01", "--cadence", "25"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(dir.path().join("damping/damping_a1_v0.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let cols: Vec<usize> = ["v_el_1", "v_el_2", "v_el_3", "v_ph_1", "v_ph_2", "v_ph_3"]
        .iter()
        .map(|c| header.iter().position(|h| h == c).unwrap())
        .collect();
    for row in lines {
        let f: Vec<&str> = row.split(',').collect();
        for &c in &cols {
            assert!(f[c].parse::<f64>().unwrap().abs() < 1e-8, "{row}");
        }
    }
}
