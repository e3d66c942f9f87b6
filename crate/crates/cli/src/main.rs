//! `sgdrl` experiment runner.
//!
//! Exit codes: 0 pass, 1 condition failed, 2 parse/config error,
//! 3 divergence, 4 certificate failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use sgdrl::drift::{check_contraction, standard_samples, transport_constants, DriftField, PropertyId};
use sgdrl::engine::{divergence_count, simulate_ensemble, write_ensemble_csv};
use sgdrl::experiment::{drift_matrix, resolve, run_certify, run_rate, ExperimentConfig};
use sgdrl::gronwall::{bound_constant, envelope_rows, recursion_envelope, verify_bound, RecursionSpec};
use sgdrl::linreg::{build_sgd_problem, interchange_check, noise_kappa, spd_contraction_constant, RegressionModel};
use sgdrl::math::{parse_vector, Point};
use sgdrl::schedule::{check_admissibility, Verdict, DEFAULT_HORIZON, DEFAULT_TOL};
use sgdrl::{Error, Schedule};

const EXIT_FAIL: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_CERTIFICATE: u8 = 4;

#[derive(Parser)]
#[command(name = "sgdrl", version, about = "Stochastic approximation experiments and error certificates")]
struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides `output_dir` from a config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Admissibility of a learning-rate schedule.
    CheckSchedule(ScheduleArgs),
    /// Contraction condition of a drift on the standard sample set.
    CheckDrift(DriftArgs),
    /// Explicit bound for a deterministic Gronwall-type recursion.
    GronwallBound(ConfigArg),
    /// Simulate an ensemble and write its checkpoints as CSV.
    Simulate(ConfigArg),
    /// Strong error per checkpoint and the fitted convergence order.
    Rate(RateArgs),
    /// Bound certificates with empirical cross-checks.
    Certify(ConfigArg),
    /// Minimizer, constants and interchange check of a regression model.
    LinregDemo(LinregArgs),
}

#[derive(Args)]
struct ScheduleArgs {
    /// e.g. `poly:alpha=1,nu=0.5` or `table:<path>`
    schedule: String,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 4)]
    k_max: u32,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: u64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct DriftArgs {
    /// e.g. `linear:A=2;0;0;8,theta_star=0;0`
    drift: String,
    /// Contraction constant; computed from the drift matrix when omitted.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    directions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct ConfigArg {
    /// Flat `key = value` config file.
    config: PathBuf,
}

#[derive(Args)]
struct RateArgs {
    /// Flat `key = value` config file.
    config: PathBuf,
    /// Also write `(ln n, ln error)` pairs.
    #[arg(long)]
    plot_data: bool,
}

#[derive(Args)]
struct LinregArgs {
    #[arg(long, default_value = "linreg:two_point")]
    model: String,
    #[arg(long, default_value_t = 100_000)]
    mc_budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Outcome of a subcommand: exit code plus a one-line summary.
struct Outcome {
    code: u8,
    summary: String,
}

fn outcome(code: u8, summary: impl Into<String>) -> anyhow::Result<Outcome> {
    Ok(Outcome {
        code,
        summary: summary.into(),
    })
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Divergence { .. } | Error::EnsembleDivergence { .. }) => EXIT_DIVERGENCE,
        Some(
            Error::CertificateUnavailable(_)
            | Error::BurnInExceedsHorizon { .. }
            | Error::NotAdmissible { .. }
            | Error::NegativeStepFactor { .. },
        ) => EXIT_CERTIFICATE,
        _ => EXIT_PARSE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be >= 1");
            return ExitCode::from(EXIT_PARSE);
        }
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAIL);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(o) => {
            println!("{}", o.summary);
            ExitCode::from(o.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::CheckSchedule(a) => cmd_check_schedule(a, out_dir(cli, None)),
        Command::CheckDrift(a) => cmd_check_drift(a, out_dir(cli, None)),
        Command::GronwallBound(a) => cmd_gronwall_bound(&a.config, out_dir(cli, None)),
        Command::Simulate(a) => {
            let (cfg, dir) = load_config(cli, &a.config)?;
            cmd_simulate(&cfg, dir)
        }
        Command::Rate(a) => {
            let (cfg, dir) = load_config(cli, &a.config)?;
            cmd_rate(&cfg, dir, a.plot_data)
        }
        Command::Certify(a) => {
            let (cfg, dir) = load_config(cli, &a.config)?;
            cmd_certify(&cfg, dir)
        }
        Command::LinregDemo(a) => cmd_linreg_demo(a, out_dir(cli, None)),
    }
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Reads a config file, applies `SGDRL_SEED` and `--out`, and returns the
/// effective config with its output directory.
fn load_config(cli: &Cli, path: &Path) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Ok(seed) = std::env::var("SGDRL_SEED") {
        cfg.set("master_seed", seed.trim())?;
    }
    let dir = out_dir(cli, Some(&cfg));
    cfg.output_dir = dir.clone();
    Ok((cfg, dir))
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Records what is needed to reproduce the run.
fn write_manifest(dir: &Path, command: &str, body: &str) -> anyhow::Result<()> {
    let text = format!(
        "command={command}\nversion={}\n{body}",
        env!("CARGO_PKG_VERSION")
    );
    write_file(dir, "manifest.txt", text.as_bytes())
}

fn cmd_check_schedule(a: &ScheduleArgs, dir: PathBuf) -> anyhow::Result<Outcome> {
    let s = Schedule::parse(&a.schedule)?;
    write_manifest(
        &dir,
        "check-schedule",
        &format!(
            "schedule={}\nc={}\nk_max={}\nhorizon={}\ntol={}\n",
            a.schedule, a.c, a.k_max, a.horizon, a.tol
        ),
    )?;
    let rep = check_admissibility(&s, a.c, a.k_max, a.horizon, a.tol)?;
    write_file(&dir, "admissibility.txt", rep.to_key_value(&s).as_bytes())?;
    let code = if rep.verdict == Verdict::Admissible { 0 } else { EXIT_FAIL };
    outcome(code, format!("verdict={}", rep.verdict))
}

fn cmd_check_drift(a: &DriftArgs, dir: PathBuf) -> anyhow::Result<Outcome> {
    let g = DriftField::parse(&a.drift)?;
    let c = match a.c {
        Some(c) => c,
        None => spd_contraction_constant(&drift_matrix(&a.drift, g.dim())?)?.c,
    };
    write_manifest(
        &dir,
        "check-drift",
        &format!(
            "drift={}\nc={c:?}\ndirections={}\nseed={}\ntol={}\n",
            a.drift, a.directions, a.seed, a.tol
        ),
    )?;
    let samples = standard_samples(g.target(), a.directions, a.seed);
    let cert = check_contraction(&g, c, &samples, a.tol)?;
    let iii = transport_constants(cert.mode, PropertyId::III)?;
    let body = format!(
        "c={:.16e}\nsamples_checked={}\nmax_violation={:.16e}\ntol={}\nvalid={}\nproperty_iii={iii:?}\n",
        cert.c,
        cert.samples_checked,
        cert.max_violation,
        cert.tol,
        cert.is_valid()
    );
    write_file(&dir, "contraction.txt", body.as_bytes())?;
    let code = if cert.is_valid() { 0 } else { EXIT_FAIL };
    outcome(code, format!("c={} valid={}", cert.c, cert.is_valid()))
}

/// Keys: `N`, `k`, `kappa`, `c`, `schedule`, `e_prefix`, `horizon`.
fn parse_recursion_spec(text: &str) -> Result<(RecursionSpec, u64), Error> {
    let mut fields = std::collections::BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key = value, got '{line}'")))?;
        if fields.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Parse(format!("duplicate key '{}'", k.trim())));
        }
    }
    let get = |k: &str| {
        fields
            .get(k)
            .ok_or_else(|| Error::Parse(format!("missing key '{k}'")))
    };
    let num = |k: &str| -> Result<f64, Error> {
        get(k)?
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number for {k}")))
    };
    let int = |k: &str| -> Result<u64, Error> {
        get(k)?
            .parse::<u64>()
            .map_err(|_| Error::Parse(format!("bad integer for {k}")))
    };
    for k in fields.keys() {
        if !["N", "k", "kappa", "c", "schedule", "e_prefix", "horizon"].contains(&k.as_str()) {
            return Err(Error::Parse(format!("unknown key '{k}'")));
        }
    }
    let spec = RecursionSpec {
        n_burn: int("N")?,
        k: num("k")?,
        kappa: num("kappa")?,
        c: num("c")?,
        schedule: Schedule::parse(get("schedule")?)?,
        e_prefix: parse_vector(get("e_prefix")?)?,
    };
    Ok((spec, int("horizon")?))
}

fn cmd_gronwall_bound(path: &Path, dir: PathBuf) -> anyhow::Result<Outcome> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let (spec, horizon) = parse_recursion_spec(&text)?;
    write_manifest(&dir, "gronwall-bound", &text)?;
    let cert = bound_constant(&spec, horizon)?;
    write_file(&dir, "certificate.txt", cert.to_key_value().as_bytes())?;
    let env = recursion_envelope(&spec, horizon)?;
    let mut csv = Vec::new();
    writeln!(csv, "n,envelope,bound")?;
    for (n, e, b) in envelope_rows(&cert, &env, &spec.schedule)? {
        writeln!(csv, "{n},{e:.16e},{b:.16e}")?;
    }
    write_file(&dir, "envelope.csv", &csv)?;
    let ok = verify_bound(&cert, &env, &spec.schedule)?;
    let code = if ok { 0 } else { EXIT_CERTIFICATE };
    outcome(code, format!("lambda={:.6e} C_inf={:.6e} verified={ok}", cert.lambda, cert.c_inf))
}

fn cmd_simulate(cfg: &ExperimentConfig, dir: PathBuf) -> anyhow::Result<Outcome> {
    write_manifest(&dir, "simulate", &cfg.to_key_value())?;
    let r = resolve(cfg)?;
    let ens = simulate_ensemble(&r.saa, &r.schedule, &r.theta0, &cfg.checkpoints, cfg.master_seed, cfg.ensemble_size)?;
    let mut csv = Vec::new();
    write_ensemble_csv(&mut csv, &ens, r.saa.dim(), cfg.master_seed)?;
    write_file(&dir, "trajectories.csv", &csv)?;
    let diverged = divergence_count(&ens);
    if diverged > 0 {
        let first: Vec<String> = ens
            .iter()
            .filter_map(|t| t.diverged_at.map(|n| format!("{}@{n}", t.stream)))
            .take(10)
            .collect();
        return outcome(
            EXIT_DIVERGENCE,
            format!("diverged={diverged}/{} first={}", ens.len(), first.join(";")),
        );
    }
    outcome(0, format!("trajectories={} checkpoints={}", ens.len(), cfg.checkpoints.len()))
}

fn cmd_rate(cfg: &ExperimentConfig, dir: PathBuf, plot_data: bool) -> anyhow::Result<Outcome> {
    write_manifest(&dir, "rate", &cfg.to_key_value())?;
    let rep = run_rate(cfg)?;
    let mut csv = Vec::new();
    rep.write_csv(&mut csv)?;
    write_file(&dir, "rate.csv", &csv)?;
    if plot_data {
        let mut plot = Vec::new();
        rep.write_plot_data(&mut plot)?;
        write_file(&dir, "plot_data.csv", &plot)?;
    }
    write_file(&dir, "summary.txt", rep.to_key_value().as_bytes())?;
    if rep.insufficient_ensemble {
        eprintln!("warning: insufficient ensemble (M = {}), slope not judged", cfg.ensemble_size);
    }
    let slope = rep.fit.map(|f| format!("{:.4}", f.slope)).unwrap_or_else(|| "n/a".into());
    outcome(
        if rep.pass { 0 } else { EXIT_FAIL },
        format!("slope={slope} expected={} pass={}", rep.expected_slope(), rep.pass),
    )
}

fn cmd_certify(cfg: &ExperimentConfig, dir: PathBuf) -> anyhow::Result<Outcome> {
    write_manifest(&dir, "certify", &cfg.to_key_value())?;
    let rep = run_certify(cfg)?;
    let mut csv = Vec::new();
    rep.write_certificates_csv(&mut csv)?;
    write_file(&dir, "certificates.csv", &csv)?;
    for cert in &rep.chain {
        write_file(&dir, &format!("certificate_q{}.txt", cert.q), cert.to_key_value().as_bytes())?;
    }
    let mut dom = Vec::new();
    rep.write_dominance_csv(&mut dom)?;
    write_file(&dir, "dominance.csv", &dom)?;
    write_file(&dir, "summary.txt", rep.to_key_value().as_bytes())?;
    match &rep.failure {
        None => outcome(0, format!("certified stages={}", rep.chain.len())),
        Some(stage) => outcome(EXIT_CERTIFICATE, format!("failed: {stage}")),
    }
}

fn cmd_linreg_demo(a: &LinregArgs, dir: PathBuf) -> anyhow::Result<Outcome> {
    let model = RegressionModel::parse(&a.model)?;
    write_manifest(
        &dir,
        "linreg-demo",
        &format!("model={}\nmc_budget={}\nseed={}\n", a.model, a.mc_budget, a.seed),
    )?;
    let lp = build_sgd_problem(&model, a.mc_budget, a.seed)?;
    let spd = spd_contraction_constant(&(&lp.m2 * 2.0))?;
    let kappa2 = noise_kappa(&lp, &model, spd.c, 2, a.mc_budget, a.seed)?;
    let d = model.dim();
    let thetas: Vec<Point> = [0.0, 0.5, -0.5, 1.0]
        .iter()
        .map(|s| Point::new(lp.theta_star.coords().iter().map(|t| t + s).collect()))
        .collect::<Result<_, _>>()?;
    let ic = interchange_check(&model, &thetas, a.mc_budget.max(10_000), 1e-4, a.seed)?;
    let body = format!(
        "model={}\ndim={d}\ntheta_star={}\nmoment_source={}\nc={:.16e}\nlambda_min={:.16e}\nlambda_max={:.16e}\n\
         sharp_c={}\nkappa_2_centered_direct={:.16e}\nkappa_2_uncentered_proof={:.16e}\n\
         interchange_max_discrepancy={:.6e}\ninterchange_pass={}\n",
        model.label(),
        lp.theta_star,
        lp.source,
        spd.c,
        spd.lambda_min,
        spd.lambda_max,
        spd.sharp_c.map(|s| format!("{s:.16e}")).unwrap_or_else(|| "none".into()),
        kappa2.centered_direct,
        kappa2.uncentered_proof,
        ic.max_discrepancy(),
        ic.passes()
    );
    write_file(&dir, "linreg.txt", body.as_bytes())?;
    print!("{body}");
    let code = if ic.passes() { 0 } else { EXIT_FAIL };
    outcome(code, format!("theta_star={} interchange_pass={}", lp.theta_star, ic.passes()))
}
