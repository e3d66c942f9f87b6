use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sgdrl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgdrl"))
        .current_dir(dir)
        .env_remove("SGDRL_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

#[test]
fn check_schedule_exit_codes() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&sgdrl(t.path(), &["check-schedule", "poly:alpha=1,nu=0.5"])), 0);
    assert_eq!(code(&sgdrl(t.path(), &["check-schedule", "poly:alpha=1,nu=1.5"])), 1);
    assert_eq!(code(&sgdrl(t.path(), &["check-schedule", "poly:alpha=1,nu"])), 2);
    let report = fs::read_to_string(t.path().join("out/admissibility.txt")).unwrap();
    assert!(report.contains("verdict=inadmissible"));
    assert!(t.path().join("out/manifest.txt").exists());
}

#[test]
fn check_drift_reports_constant() {
    let t = TempDir::new().unwrap();
    let o = sgdrl(t.path(), &["check-drift", "linear:A=2;0;0;8,theta_star=0;0"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("c=0.03125"));
    let o = sgdrl(t.path(), &["check-drift", "linear:A=2;0;0;8,theta_star=0;0", "--c", "0.5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn rate_csv_independent_of_workers() {
    let t = TempDir::new().unwrap();
    write(
        t.path(),
        "rate.cfg",
        "problem = linreg:two_point\nschedule = poly:alpha=0.1,nu=0.5\nensemble_size = 400\nmaster_seed = 17\n",
    );
    let mut outputs = Vec::new();
    for w in ["1", "4", "8"] {
        let dir = format!("w{w}");
        let o = sgdrl(t.path(), &["--workers", w, "rate", "rate.cfg", "--out", &dir, "--plot-data"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(t.path().join(&dir).join("rate.csv")).unwrap());
        assert!(t.path().join(&dir).join("plot_data.csv").exists());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let m1 = fs::read_to_string(t.path().join("w1/manifest.txt")).unwrap();
    let m8 = fs::read_to_string(t.path().join("w8/manifest.txt")).unwrap();
    assert_eq!(m1.replace("w1", ""), m8.replace("w8", ""));
}

#[test]
fn rate_single_trajectory_warns() {
    let t = TempDir::new().unwrap();
    write(t.path(), "m1.cfg", "problem = linreg:two_point\nensemble_size = 1\n");
    let o = sgdrl(t.path(), &["rate", "m1.cfg"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient ensemble"));
    let summary = fs::read_to_string(t.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("warning=insufficient ensemble"));
}

#[test]
fn rate_zero_noise_faster_than_stochastic_order() {
    let t = TempDir::new().unwrap();
    write(
        t.path(),
        "det.cfg",
        "problem = scalar:c=1\nnoise = zero\nschedule = poly:alpha=0.5,nu=0.5\ntheta0 = 1\n\
         ensemble_size = 2\ncheckpoints = dyadic:2,6\n",
    );
    let o = sgdrl(t.path(), &["rate", "det.cfg"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(t.path().join("out/summary.txt")).unwrap();
    let slope: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("slope="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(slope < -0.25 - 0.1, "{slope}");
}

#[test]
fn seed_from_environment() {
    let t = TempDir::new().unwrap();
    write(t.path(), "s.cfg", "problem = linreg:two_point\nensemble_size = 3\ncheckpoints = 1;2\n");
    let o = Command::new(env!("CARGO_BIN_EXE_sgdrl"))
        .current_dir(t.path())
        .env("SGDRL_SEED", "99")
        .args(["simulate", "s.cfg"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let manifest = fs::read_to_string(t.path().join("out/manifest.txt")).unwrap();
    assert!(manifest.contains("master_seed=99"));
    let csv = fs::read_to_string(t.path().join("out/trajectories.csv")).unwrap();
    assert!(csv.starts_with("# d=1,seed=99,"));
    assert_eq!(csv.lines().count(), 2 + 3 * 2);
}

#[test]
fn simulate_divergence_exit_3() {
    let t = TempDir::new().unwrap();
    write(
        t.path(),
        "div.cfg",
        "problem = scalar:c=1\nschedule = poly:alpha=1e200,nu=0\ntheta0 = 1\nensemble_size = 2\ncheckpoints = 5;10\n",
    );
    let o = sgdrl(t.path(), &["simulate", "div.cfg"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("diverged=2/2"));
    assert_eq!(code(&sgdrl(t.path(), &["rate", "div.cfg"])), 3);
}

#[test]
fn bad_config_exit_2() {
    let t = TempDir::new().unwrap();
    write(t.path(), "bad.cfg", "problem = linreg:two_point\np = 3\n");
    assert_eq!(code(&sgdrl(t.path(), &["rate", "bad.cfg"])), 2);
    assert_eq!(code(&sgdrl(t.path(), &["rate", "missing.cfg"])), 2);
    write(t.path(), "tab.cfg", "schedule = poly:alpha=1,nu=0.5\nproblem = linreg:nope\n");
    assert_eq!(code(&sgdrl(t.path(), &["certify", "tab.cfg"])), 2);
}

#[test]
fn certify_l2_and_falsification() {
    let t = TempDir::new().unwrap();
    write(t.path(), "p2.cfg", "problem = linreg:two_point\nensemble_size = 500\nmc_budget = 500\n");
    let o = sgdrl(t.path(), &["certify", "p2.cfg", "--out", "ok"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(t.path().join("ok/certificates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.contains("certified-empirical"));

    write(
        t.path(),
        "small.cfg",
        "problem = linreg:two_point\nkappa = 4.608\nensemble_size = 100\nmc_budget = 100\n",
    );
    let o = sgdrl(t.path(), &["certify", "small.cfg", "--out", "small"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("noise_moment_check q=2"));
}

#[test]
fn certify_names_failed_stage() {
    let t = TempDir::new().unwrap();
    write(
        t.path(),
        "p4.cfg",
        "problem = linreg:two_point\np = 4\nensemble_size = 100\nmc_budget = 100\n",
    );
    let o = sgdrl(t.path(), &["certify", "p4.cfg"]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("stage q=4"));
}

#[test]
fn gronwall_bound_outputs() {
    let t = TempDir::new().unwrap();
    write(
        t.path(),
        "g.cfg",
        "N = 0\nk = 1\nkappa = 1\nc = 1.5\nschedule = poly:alpha=0.5,nu=0.5\ne_prefix = 0.5\nhorizon = 1000\n",
    );
    let o = sgdrl(t.path(), &["gronwall-bound", "g.cfg"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(t.path().join("out/envelope.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1001);

    write(
        t.path(),
        "h.cfg",
        "N = 0\nk = 1\nkappa = 1\nc = 0.1\nschedule = poly:alpha=1,nu=1\ne_prefix = 0.5\nhorizon = 1000\n",
    );
    assert_eq!(code(&sgdrl(t.path(), &["gronwall-bound", "h.cfg"])), 4);
    write(t.path(), "x.cfg", "N = 0\n");
    assert_eq!(code(&sgdrl(t.path(), &["gronwall-bound", "x.cfg"])), 2);
}

#[test]
fn linreg_demo_two_point() {
    let t = TempDir::new().unwrap();
    let o = sgdrl(t.path(), &["linreg-demo", "--mc-budget", "10000"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(t.path().join("out/linreg.txt")).unwrap();
    assert!(text.contains("theta_star=1.4\n"));
    assert!(text.contains("moment_source=enumerated"));
}
