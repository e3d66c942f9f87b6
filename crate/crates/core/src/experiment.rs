//! Batch experiments driven by flat `key = value` config files: strong-error
//! rate estimation and certificate generation with empirical cross-checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use nalgebra::DMatrix;

use crate::certificates::{
    dominance_check, lp_error, lp_induction_chain, noise_moment_check, rate_fit, CertificateSetup,
    DominanceRow, LpCertificate, MomentBoundSpec, MomentForm, NoiseMomentReport, RateFit,
};
use crate::drift::{unit_directions, DriftField};
use crate::engine::{divergence_count, dyadic_checkpoints, from_sgd, simulate_ensemble, MeanEstimation, Noise, SaaProblem, Trajectory};
use crate::error::{Error, Result};
use crate::linreg::{build_sgd_problem, noise_kappa, spd_contraction_constant, MomentSource, RegressionModel};
use crate::math::{parse_key_values, parse_vector, Point};
use crate::schedule::Schedule;

pub const DEFAULT_MC_BUDGET: usize = 2000;
pub const DEFAULT_HORIZON: u64 = 1_000_000;
pub const DEFAULT_NOISE_DRAWS: usize = 10_000;

const KEYS: &[&str] = &[
    "problem",
    "noise",
    "schedule",
    "c",
    "kappa",
    "p",
    "theta0",
    "checkpoints",
    "ensemble_size",
    "master_seed",
    "output_dir",
    "mc_budget",
    "horizon",
    "tolerance",
    "noise_draws",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// `linreg:…` model or a drift string (`linear:…`, `scalar:…`).
    pub problem: String,
    /// Additive noise for drift problems: `zero`, `gaussian:sigma=<s>` or
    /// `box:half_width=<h>`. Ignored for regression models.
    pub noise: String,
    pub schedule: String,
    pub c: Option<f64>,
    pub kappa: Option<f64>,
    pub p: u32,
    pub theta0: Option<Vec<f64>>,
    pub checkpoints: Vec<u64>,
    pub checkpoints_spec: String,
    pub ensemble_size: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub mc_budget: usize,
    pub horizon: u64,
    pub tolerance: Option<f64>,
    pub noise_draws: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: "linreg:two_point".into(),
            noise: "zero".into(),
            schedule: "poly:alpha=0.1,nu=0.5".into(),
            c: None,
            kappa: None,
            p: 2,
            theta0: None,
            checkpoints: dyadic_checkpoints(4, 13),
            checkpoints_spec: "dyadic:4,13".into(),
            ensemble_size: 2000,
            master_seed: 0,
            output_dir: PathBuf::from("out"),
            mc_budget: DEFAULT_MC_BUDGET,
            horizon: DEFAULT_HORIZON,
            tolerance: None,
            noise_draws: DEFAULT_NOISE_DRAWS,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Parse(format!("bad value '{v}' for {key}")))
}

fn parse_real(key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_num(key, v)?;
    if !x.is_finite() {
        return Err(Error::Parse(format!("{key} must be finite")));
    }
    Ok(x)
}

/// `dyadic:<lo>,<hi>` or a `;`-separated list.
pub fn parse_checkpoints(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let out = if let Some(rest) = s.strip_prefix("dyadic:") {
        let (lo, hi) = rest
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("expected dyadic:<lo>,<hi>, got '{s}'")))?;
        let lo: u32 = parse_num("checkpoints", lo.trim())?;
        let hi: u32 = parse_num("checkpoints", hi.trim())?;
        if lo > hi || hi > 40 {
            return Err(Error::Parse(format!("bad dyadic range {lo}..{hi}")));
        }
        dyadic_checkpoints(lo, hi)
    } else {
        s.split(';')
            .map(|t| parse_num::<u64>("checkpoints", t.trim()))
            .collect::<Result<Vec<_>>>()?
    };
    if out.is_empty() || out.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parse("checkpoints must be strictly increasing".into()));
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Parse(format!("line {}: unknown key '{k}'", i + 1)));
            }
            if seen.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key '{k}'", i + 1)));
            }
        }
        let mut cfg = ExperimentConfig::default();
        for (k, v) in &seen {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "problem" => self.problem = v.to_string(),
            "noise" => self.noise = v.to_string(),
            "schedule" => self.schedule = v.to_string(),
            "c" => self.c = Some(parse_real(key, v)?),
            "kappa" => self.kappa = Some(parse_real(key, v)?),
            "p" => self.p = parse_num(key, v)?,
            "theta0" => self.theta0 = Some(parse_vector(v)?),
            "checkpoints" => {
                self.checkpoints = parse_checkpoints(v)?;
                self.checkpoints_spec = v.to_string();
            }
            "ensemble_size" => self.ensemble_size = parse_num(key, v)?,
            "master_seed" => self.master_seed = parse_num(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "mc_budget" => self.mc_budget = parse_num(key, v)?,
            "horizon" => self.horizon = parse_num(key, v)?,
            "tolerance" => self.tolerance = Some(parse_real(key, v)?),
            "noise_draws" => self.noise_draws = parse_num(key, v)?,
            _ => return Err(Error::Parse(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || !self.p.is_multiple_of(2) {
            return Err(Error::Parse(format!("p must be even and >= 2, got {}", self.p)));
        }
        if self.ensemble_size < 1 {
            return Err(Error::Parse("ensemble_size must be >= 1".into()));
        }
        if self.c.is_some_and(|c| c <= 0.0) || self.kappa.is_some_and(|k| k <= 0.0) {
            return Err(Error::Parse("c and kappa must be > 0".into()));
        }
        if self.tolerance.is_some_and(|t| t <= 0.0) {
            return Err(Error::Parse("tolerance must be > 0".into()));
        }
        Schedule::parse(&self.schedule)?;
        parse_noise(&self.noise)?;
        Ok(())
    }

    /// Rate-fit tolerance: supplied, else 0.08 for `p = 2` and 0.10 above.
    pub fn rate_tolerance(&self) -> f64 {
        self.tolerance
            .unwrap_or(if self.p == 2 { 0.08 } else { 0.10 })
    }

    /// Canonical `key=value` rendering; parsing it gives back `self`.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "problem={}", self.problem);
        let _ = writeln!(out, "noise={}", self.noise);
        let _ = writeln!(out, "schedule={}", self.schedule);
        if let Some(c) = self.c {
            let _ = writeln!(out, "c={c:?}");
        }
        if let Some(k) = self.kappa {
            let _ = writeln!(out, "kappa={k:?}");
        }
        let _ = writeln!(out, "p={}", self.p);
        if let Some(t) = &self.theta0 {
            let parts: Vec<String> = t.iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(out, "theta0={}", parts.join(";"));
        }
        let _ = writeln!(out, "checkpoints={}", self.checkpoints_spec);
        let _ = writeln!(out, "ensemble_size={}", self.ensemble_size);
        let _ = writeln!(out, "master_seed={}", self.master_seed);
        let _ = writeln!(out, "output_dir={}", self.output_dir.display());
        let _ = writeln!(out, "mc_budget={}", self.mc_budget);
        let _ = writeln!(out, "horizon={}", self.horizon);
        if let Some(t) = self.tolerance {
            let _ = writeln!(out, "tolerance={t:?}");
        }
        let _ = writeln!(out, "noise_draws={}", self.noise_draws);
        out
    }
}

fn parse_noise(s: &str) -> Result<Noise> {
    let s = s.trim();
    let real = |rest: &str, key: &str| -> Result<f64> {
        let kv = parse_key_values(rest)?;
        match kv.as_slice() {
            [(k, v)] if k == key => parse_real(key, v),
            _ => Err(Error::Parse(format!("expected {key}=<value> in noise '{s}'"))),
        }
    };
    let noise = if s == "zero" {
        Noise::Zero
    } else if let Some(rest) = s.strip_prefix("gaussian:") {
        Noise::Gaussian {
            sigma: real(rest, "sigma")?,
        }
    } else if let Some(rest) = s.strip_prefix("box:") {
        Noise::UniformBox {
            half_width: real(rest, "half_width")?,
        }
    } else {
        return Err(Error::Parse(format!("unrecognized noise '{s}'")));
    };
    match noise {
        Noise::Gaussian { sigma: x } | Noise::UniformBox { half_width: x } if x < 0.0 => {
            Err(Error::Parse("noise scale must be >= 0".into()))
        }
        n => Ok(n),
    }
}

/// `E‖D‖^q ≤ κ_q` for the built-in additive laws (even `q`); 1 for zero noise.
fn additive_kappa(noise: &Noise, d: usize, q: u32) -> f64 {
    let k = match noise {
        Noise::Zero => 0.0,
        Noise::Gaussian { sigma } => {
            // E‖Z‖^q = d(d+2)…(d+q−2) for standard normal Z in R^d
            let prod: f64 = (0..q / 2).map(|i| (d + 2 * i as usize) as f64).product();
            sigma.powi(q as i32) * prod
        }
        Noise::UniformBox { half_width } => (half_width * (d as f64).sqrt()).powi(q as i32),
        Noise::Centered(_) => f64::NAN,
    };
    // any κ > 0 bounds zero noise
    if k > 0.0 {
        k
    } else {
        1.0
    }
}

/// A config resolved into a simulable problem with its constants.
#[derive(Clone)]
pub struct ResolvedProblem {
    pub saa: SaaProblem,
    pub schedule: Schedule,
    pub theta0: Point,
    pub c: f64,
    pub c_source: &'static str,
    /// Noise constants for `q = 2, 4, …, p`.
    pub kappas: Vec<f64>,
    pub kappa_source: &'static str,
    pub stochastic: bool,
    pub moment_source: Option<MomentSource>,
}

pub fn resolve(cfg: &ExperimentConfig) -> Result<ResolvedProblem> {
    cfg.validate()?;
    let schedule = Schedule::parse(&cfg.schedule)?;
    let stages = (cfg.p / 2) as usize;
    let (saa, c_computed, kappas_computed, stochastic, moment_source) = if cfg.problem.starts_with("linreg:") {
        let model = RegressionModel::parse(&cfg.problem)?;
        let lp = build_sgd_problem(&model, cfg.mc_budget, cfg.master_seed)?;
        let saa = from_sgd(&lp.sgd, MeanEstimation::Disabled)?;
        let c = spd_contraction_constant(&(&lp.m2 * 2.0))?.c;
        let kappas = (1..=stages as u32)
            .map(|i| Ok(noise_kappa(&lp, &model, c, 2 * i, cfg.mc_budget, cfg.master_seed)?.centered_direct))
            .collect::<Result<Vec<f64>>>()?;
        let stochastic = kappas.iter().any(|k| *k > 0.0);
        let kappas = kappas.into_iter().map(|k| if k > 0.0 { k } else { 1.0 }).collect();
        (saa, c, kappas, stochastic, Some(lp.source))
    } else {
        let drift = DriftField::parse(&cfg.problem)?;
        let c = match cfg.c {
            Some(c) => c,
            None => spd_contraction_constant(&drift_matrix(&cfg.problem, drift.dim())?)?.c,
        };
        let noise = parse_noise(&cfg.noise)?;
        let d = drift.dim();
        let kappas = (1..=stages as u32).map(|i| additive_kappa(&noise, d, 2 * i)).collect();
        let stochastic = !matches!(noise, Noise::Zero | Noise::Gaussian { sigma: 0.0 } | Noise::UniformBox { half_width: 0.0 });
        (SaaProblem::new(drift, noise, cfg.problem.clone())?, c, kappas, stochastic, None)
    };
    let theta0 = match &cfg.theta0 {
        Some(t) => Point::new(t.clone())?,
        None => Point::zeros(saa.dim()),
    };
    theta0.check_dim(saa.dim())?;
    Ok(ResolvedProblem {
        c: cfg.c.unwrap_or(c_computed),
        c_source: if cfg.c.is_some() { "supplied" } else { "computed" },
        kappas: match cfg.kappa {
            Some(k) => vec![k; stages],
            None => kappas_computed,
        },
        kappa_source: if cfg.kappa.is_some() { "supplied" } else { "computed" },
        saa,
        schedule,
        theta0,
        stochastic,
        moment_source,
    })
}

/// The matrix `A` of a `linear:` or `scalar:` drift string.
pub fn drift_matrix(spec: &str, d: usize) -> Result<DMatrix<f64>> {
    if let Some(rest) = spec.trim().strip_prefix("linear:") {
        for (k, v) in parse_key_values(rest)? {
            if k == "A" {
                return Ok(DMatrix::from_row_slice(d, d, &parse_vector(&v)?));
            }
        }
    } else if let Some(rest) = spec.trim().strip_prefix("scalar:") {
        for (k, v) in parse_key_values(rest)? {
            if k == "c" {
                return Ok(DMatrix::identity(d, d) * parse_real("c", &v)?);
            }
        }
    }
    Err(Error::Parse(format!("cannot read a drift matrix from '{spec}'")))
}

fn run_ensemble(cfg: &ExperimentConfig, r: &ResolvedProblem) -> Result<Vec<Trajectory>> {
    let ensemble = simulate_ensemble(
        &r.saa,
        &r.schedule,
        &r.theta0,
        &cfg.checkpoints,
        cfg.master_seed,
        cfg.ensemble_size,
    )?;
    let count = divergence_count(&ensemble);
    if count > 0 {
        return Err(Error::EnsembleDivergence {
            count,
            total: ensemble.len(),
        });
    }
    Ok(ensemble)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub n: u64,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub p: u32,
    pub nu: f64,
    pub tolerance: f64,
    pub stochastic: bool,
    pub rows: Vec<RateRow>,
    pub fit: Option<RateFit>,
    pub fit_error: Option<String>,
    pub insufficient_ensemble: bool,
    pub pass: bool,
}

impl RateReport {
    pub fn expected_slope(&self) -> f64 {
        -self.nu / 2.0
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,lp_error,std_error")?;
        for r in &self.rows {
            writeln!(w, "{},{:.16e},{:.16e}", r.n, r.estimate, r.std_error)?;
        }
        Ok(())
    }

    /// `(ln n, ln error)` pairs for plotting.
    pub fn write_plot_data<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "log_n,log_error")?;
        for r in self.rows.iter().filter(|r| r.estimate > 0.0) {
            writeln!(w, "{:.16e},{:.16e}", (r.n as f64).ln(), r.estimate.ln())?;
        }
        Ok(())
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "p={}", self.p);
        let _ = writeln!(out, "nu={}", self.nu);
        let _ = writeln!(out, "expected_slope={}", self.expected_slope());
        let _ = writeln!(out, "tolerance={}", self.tolerance);
        let _ = writeln!(out, "stochastic={}", self.stochastic);
        match (&self.fit, &self.fit_error) {
            (Some(f), _) => {
                let _ = writeln!(out, "slope={:.16e}", f.slope);
                let _ = writeln!(out, "intercept={:.16e}", f.intercept);
                let _ = writeln!(out, "r_squared={:.16e}", f.r_squared);
            }
            (None, Some(e)) => {
                let _ = writeln!(out, "fit_error={e}");
            }
            _ => {}
        }
        if self.insufficient_ensemble {
            let _ = writeln!(out, "warning=insufficient ensemble");
        }
        let _ = writeln!(out, "pass={}", self.pass);
        out
    }
}

/// Ensemble strong-error estimates per checkpoint and the log–log slope
/// against `−ν/2`. Passes when `slope ≤ −ν/2 + tol`, and for stochastic
/// problems also `slope ≥ −ν/2 − tol`. Fewer than two trajectories pass
/// with an "insufficient ensemble" warning.
pub fn run_rate(cfg: &ExperimentConfig) -> Result<RateReport> {
    let r = resolve(cfg)?;
    let nu = r
        .schedule
        .nu()
        .ok_or_else(|| Error::InvalidArgument("rate needs a polynomial schedule".into()))?;
    let ensemble = run_ensemble(cfg, &r)?;
    let target = r.saa.target();
    let pf = cfg.p as f64;
    let rows = cfg
        .checkpoints
        .iter()
        .map(|&n| {
            let e = lp_error(&ensemble, target, pf, n)?;
            Ok(RateRow {
                n,
                estimate: e.estimate,
                std_error: e.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.estimate)).collect();
    let (fit, fit_error) = match rate_fit(&pts) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let tol = cfg.rate_tolerance();
    let insufficient_ensemble = cfg.ensemble_size < 2;
    let within = fit.is_some_and(|f| {
        f.slope <= -nu / 2.0 + tol && (!r.stochastic || f.slope >= -nu / 2.0 - tol)
    });
    Ok(RateReport {
        p: cfg.p,
        nu,
        tolerance: tol,
        stochastic: r.stochastic,
        rows,
        fit,
        fit_error,
        insufficient_ensemble,
        pass: insufficient_ensemble || within,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyReport {
    pub c: f64,
    pub kappas: Vec<f64>,
    pub noise_checks: Vec<NoiseMomentReport>,
    pub chain: Vec<LpCertificate>,
    /// Per certified stage `q`, the bound against the ensemble estimate.
    pub dominance: Vec<(u32, Vec<DominanceRow>)>,
    /// The first failing stage, if any.
    pub failure: Option<String>,
}

impl CertifyReport {
    pub fn write_certificates_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", LpCertificate::CSV_HEADER)?;
        for c in &self.chain {
            writeln!(w, "{}", c.csv_row())?;
        }
        Ok(())
    }

    pub fn write_dominance_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "q,n,estimate,std_error,bound,holds")?;
        for (q, rows) in &self.dominance {
            for r in rows {
                writeln!(
                    w,
                    "{q},{},{:.16e},{:.16e},{:.16e},{}",
                    r.n,
                    r.estimate,
                    r.std_error,
                    r.bound,
                    r.holds()
                )?;
            }
        }
        Ok(())
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "c={:.16e}", self.c);
        for (i, k) in self.kappas.iter().enumerate() {
            let _ = writeln!(out, "kappa_{}={k:.16e}", 2 * (i + 1));
        }
        for rep in &self.noise_checks {
            let _ = writeln!(
                out,
                "noise_check_q{}={} min_margin={:.6e}",
                rep.spec.p,
                if rep.passes() { "pass" } else { "fail" },
                rep.min_margin()
            );
        }
        for c in &self.chain {
            let _ = writeln!(out, "stage_q{}={} lambda={:.6e} N={}", c.q, c.status, c.lambda_q, c.n_q);
        }
        for (q, rows) in &self.dominance {
            let ok = rows.iter().filter(|r| r.holds()).count();
            let _ = writeln!(out, "dominance_q{q}={ok}/{}", rows.len());
        }
        let _ = writeln!(out, "failure={}", self.failure.as_deref().unwrap_or("none"));
        out
    }
}

/// Noise samples `θ0`, `ϑ` and `ϑ ± r·u` on a few radii and directions.
fn noise_probe_points(r: &ResolvedProblem, seed: u64) -> Vec<Point> {
    let target = r.saa.target();
    let mut out = vec![r.theta0.clone(), target.clone()];
    for u in unit_directions(target.dim(), 4, seed) {
        for rad in [0.5, 1.0, 2.0, 4.0] {
            out.push(target.axpy(rad, &u));
        }
    }
    out
}

/// Noise-moment checks for every stage, the bound chain, and the ensemble
/// comparison for every certified stage.
pub fn run_certify(cfg: &ExperimentConfig) -> Result<CertifyReport> {
    let r = resolve(cfg)?;
    let mut report = CertifyReport {
        c: r.c,
        kappas: r.kappas.clone(),
        noise_checks: Vec::new(),
        chain: Vec::new(),
        dominance: Vec::new(),
        failure: None,
    };
    let probes = noise_probe_points(&r, cfg.master_seed);
    for (i, &kappa) in r.kappas.iter().enumerate() {
        let q = 2 * (i as u32 + 1);
        let spec = MomentBoundSpec::new(kappa, q, MomentForm::Centered)?;
        let rep = noise_moment_check(&r.saa, &spec, &probes, cfg.noise_draws, cfg.master_seed)?;
        let ok = rep.passes();
        report.noise_checks.push(rep);
        if !ok {
            report.failure = Some(format!("noise_moment_check q={q}"));
            return Ok(report);
        }
    }
    let setup = CertificateSetup {
        problem: &r.saa,
        schedule: &r.schedule,
        c: r.c,
        theta0: &r.theta0,
        horizon: cfg.horizon,
        mc_budget: cfg.mc_budget,
        master_seed: cfg.master_seed,
    };
    report.chain = lp_induction_chain(&setup, &r.kappas, cfg.p)?;
    if let Some(failed) = report.chain.iter().find(|c| !c.is_certified()) {
        if let crate::certificates::CertificateStatus::Failed(reason) = &failed.status {
            report.failure = Some(format!("stage q={}: {reason}", failed.q));
        }
    }
    let ensemble = run_ensemble(cfg, &r)?;
    for cert in report.chain.iter().filter(|c| c.is_certified()) {
        let rows = dominance_check(cert, &ensemble, r.saa.target(), &r.schedule, &cfg.checkpoints)?;
        if report.failure.is_none() && rows.iter().any(|row| !row.holds()) {
            report.failure = Some(format!("dominance q={}", cert.q));
        }
        report.dominance.push((cert.q, rows));
    }
    Ok(report)
}
