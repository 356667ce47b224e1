use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn statfield(args: &[&str], extra: &[&Path]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_statfield"));
    cmd.args(args);
    for p in extra {
        cmd.arg(p);
    }
    cmd.output().unwrap()
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_statfield"));
    c.args([cmd, "--config"]).arg(config).arg("--out").arg(out);
    c.output().unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn free_quantum_run_conserves_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("free");
    let o = run("evolve", &scenario("free_quantum.toml"), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    assert!(s["energy_drift_max"].as_f64().unwrap() <= 1e-8);
    assert!(s["norm_error"].as_f64().unwrap() <= 1e-8);
    let header = fs::read_to_string(out.join("trajectory.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "t,x_mean,p_mean,f_mean,t_mean,v_mean,e_mean,fisher_i,entropy,ehrenfest_r1,ehrenfest_r2"
    );
    let copied = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(copied.contains("split_step"));
    assert!(copied.contains(out.to_str().unwrap()));
}

#[test]
fn classical_constant_force() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("lin");
    let o = run("evolve", &scenario("classical_linear.toml"), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let gain = s["momentum_change"].as_f64().unwrap();
    assert!((gain - 0.3).abs() <= 1e-6, "{gain}");
}

#[test]
fn invalid_coupling_key_exits_two_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("free_quantum.toml")).unwrap().replace("hbar_eff", "hbar");
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("never");
    let o = run("evolve", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hbar"));
    assert!(!out.exists());
}

#[test]
fn unstable_step_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("harmonic_rk4.toml")).unwrap().replace("dt = 6.103515625e-4", "dt = 0.02");
    let cfg = tmp.path().join("fast.toml");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("never");
    let o = run("evolve", &cfg, &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t ="));
    assert!(!out.exists());
}

#[test]
fn verify_symbolic_reports_each_check() {
    let tmp = tempfile::tempdir().unwrap();
    let o = statfield(&["verify-symbolic", "--out"], &[tmp.path()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let fails: Vec<&str> = stdout.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(fails.len(), 1, "{stdout}");
    assert!(fails[0].contains("n = 1"));
    assert_eq!(o.status.code(), Some(4));
    assert!(tmp.path().join("report.json").exists());
    let o = statfield(&["verify-symbolic", "--window-lo", "3", "--window-hi", "-3"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn maxent_two_level() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    let o = run("maxent", &scenario("maxent_two_level.toml"), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let l = s["lambda2"].as_f64().unwrap();
    assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-10);
    assert_eq!(s["extremum"]["non_increasing"].as_u64(), Some(100));
    let rho = fs::read_to_string(out.join("rho.csv")).unwrap();
    assert!(rho.starts_with("i,rho\n"));
}

#[test]
fn spectrum_moment_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = run("spectrum", &scenario("spectrum_bump.toml"), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&out);
    let gap = -s["h_moments"][2].as_f64().unwrap();
    let expected = s["second_moment_gap_expected"].as_f64().unwrap();
    assert!((gap / expected - 1.0).abs() < 1e-5);
    for f in ["quantum.csv", "hybrid.csv", "h.csv", "config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn batch_runs_each_config_in_its_own_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let batch = tmp.path().join("batch.toml");
    let list = format!(
        "configs = [{:?}, {:?}]\n",
        scenario("classical_linear.toml").to_str().unwrap(),
        scenario("free_quantum.toml").to_str().unwrap()
    );
    fs::write(&batch, list).unwrap();
    let out = tmp.path().join("runs");
    let o = statfield(&["evolve", "--batch"], &[&batch, Path::new("--out"), &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["classical_linear", "free_quantum"] {
        assert!(out.join(name).join("trajectory.csv").exists(), "{name}");
    }
}
