//! Explicit `L^q` error bounds `E‖Θ_n − ϑ‖^q ≤ λ_q γ_n^{q/2}` built from the
//! mean-square and Lyapunov propositions, plus empirical error estimation.
//!
//! The finitely many prefix moments `E‖Θ_l − ϑ‖^q`, `l ≤ N`, are estimated
//! by Monte Carlo, so every certificate is empirical rather than proven.

use std::fmt;

use rayon::prelude::*;

use crate::engine::{prefix_moments, SaaProblem, Trajectory};
use crate::error::{Error, Result};
use crate::math::{dot, Point};
use crate::rng::{seek_step, stream_rng};
use crate::schedule::{check_admissibility, Schedule, Verdict, DEFAULT_TOL};

/// Which quantity bounds the `p`-th noise moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentForm {
    /// `E‖D_n‖^p ≤ κ(1 + ‖θ − ϑ‖^p)`
    Centered,
    /// `E‖D_n‖^p ≤ κ(1 + ‖θ‖^p)`
    Uncentered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBoundSpec {
    pub kappa: f64,
    pub p: u32,
    pub form: MomentForm,
}

impl MomentBoundSpec {
    pub fn new(kappa: f64, p: u32, form: MomentForm) -> Result<Self> {
        check_even(p)?;
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidArgument(format!("kappa must be > 0, got {kappa}")));
        }
        Ok(MomentBoundSpec { kappa, p, form })
    }
}

fn check_even(p: u32) -> Result<()> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("p must be even and >= 2, got {p}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateStatus {
    CertifiedEmpirical,
    Failed(String),
}

impl fmt::Display for CertificateStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertificateStatus::CertifiedEmpirical => write!(f, "certified-empirical"),
            CertificateStatus::Failed(_) => write!(f, "failed"),
        }
    }
}

/// One stage of the bound chain. Fields a failed stage could not compute
/// are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct LpCertificate {
    pub q: u32,
    /// `q/2`
    pub k: f64,
    /// Forcing constant of the stage recursion.
    pub kappa_q: f64,
    pub lambda_q: f64,
    /// Burn-in index `N_q`.
    pub n_q: u64,
    pub c_q: f64,
    pub c_q_argmin: u64,
    pub horizon: u64,
    /// `(l, estimated E‖Θ_l − ϑ‖^q, standard error)` for `l ≤ N_q`.
    pub prefix_estimates: Vec<(u64, f64, f64)>,
    pub status: CertificateStatus,
}

impl LpCertificate {
    pub fn is_certified(&self) -> bool {
        self.status == CertificateStatus::CertifiedEmpirical
    }

    /// `λ_q γ_n^{q/2}`.
    pub fn bound_at(&self, schedule: &Schedule, n: u64) -> Result<f64> {
        Ok(self.lambda_q * schedule.gamma(n)?.powf(self.k))
    }

    pub fn to_key_value(&self) -> String {
        let mut out = format!(
            "q={}\nk={}\nkappa_q={:.16e}\nlambda_q={:.16e}\nN_q={}\nC_q={:.16e}\nC_q_argmin={}\n\
             horizon={}\nprefix_last_l={}\nstatus={}\n",
            self.q,
            self.k,
            self.kappa_q,
            self.lambda_q,
            self.n_q,
            self.c_q,
            self.c_q_argmin,
            self.horizon,
            self.prefix_estimates.last().map(|r| r.0).unwrap_or(0),
            self.status,
        );
        if let CertificateStatus::Failed(reason) = &self.status {
            out.push_str(&format!("reason={reason}\n"));
        }
        out
    }

    pub const CSV_HEADER: &'static str = "q,lambda,N,C,status";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{},{:.16e},{}",
            self.q, self.lambda_q, self.n_q, self.c_q, self.status
        )
    }

    fn failed(q: u32, kappa_q: f64, horizon: u64, reason: String) -> Self {
        LpCertificate {
            q,
            k: q as f64 / 2.0,
            kappa_q,
            lambda_q: f64::NAN,
            n_q: 0,
            c_q: f64::NAN,
            c_q_argmin: 0,
            horizon,
            prefix_estimates: Vec::new(),
            status: CertificateStatus::Failed(reason),
        }
    }
}

/// The run a certificate is computed for.
#[derive(Debug, Clone)]
pub struct CertificateSetup<'a> {
    pub problem: &'a SaaProblem,
    pub schedule: &'a Schedule,
    /// Contraction constant of the drift.
    pub c: f64,
    pub theta0: &'a Point,
    /// Last index over which the tail conditions are evaluated.
    pub horizon: u64,
    /// Trajectories for the prefix moment estimates.
    pub mc_budget: usize,
    pub master_seed: u64,
}

impl CertificateSetup<'_> {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidArgument(format!("c must be > 0, got {}", self.c)));
        }
        if self.mc_budget < 1 {
            return Err(Error::InvalidArgument("mc_budget must be >= 1".into()));
        }
        if self.horizon < 2 {
            return Err(Error::HorizonTooSmall {
                horizon: self.horizon,
                minimum: 2,
            });
        }
        self.theta0.check_dim(self.problem.dim())?;
        self.schedule.require_len(self.horizon)
    }
}

/// Smallest `N` with `γ_l ≤ bound` for all `N < l ≤ horizon`.
fn burn_in(schedule: &Schedule, bound: f64, horizon: u64) -> Result<u64> {
    let mut n = horizon;
    while n > 0 && schedule.gamma(n)? <= bound {
        n -= 1;
    }
    if n >= horizon {
        let projected = match schedule {
            Schedule::Polynomial { alpha, nu } if *nu > 0.0 => {
                format!(", projected N ≈ {:.3e}", (alpha / bound).powf(1.0 / nu))
            }
            _ => String::new(),
        };
        return Err(Error::CertificateUnavailable(format!(
            "N exceeds horizon {horizon}: step bound {bound:.3e} not reached{projected}"
        )));
    }
    Ok(n)
}

/// `min_{N < l ≤ horizon} [(γ_l^k − γ_{l−1}^k)/γ_l^{k+1} + (c/2)γ_{l−1}^k/γ_l^k]`.
fn tail_constant(schedule: &Schedule, k: f64, c: f64, n_burn: u64, horizon: u64) -> Result<(f64, u64)> {
    let vals: Vec<(u64, f64)> = (n_burn + 1..=horizon)
        .into_par_iter()
        .map(|l| Ok((l, schedule.rate_ratio(k, c / 2.0, l)?)))
        .collect::<Result<_>>()?;
    let (argmin, min) = vals
        .into_iter()
        .fold((0, f64::INFINITY), |acc, (l, d)| if d < acc.1 || d.is_nan() { (l, d) } else { acc });
    if !(min > 64.0 * f64::EPSILON * c) {
        return Err(Error::CertificateUnavailable(format!(
            "C = {min:e} is not positive (at l = {argmin})"
        )));
    }
    Ok((min, argmin))
}

/// Shared stage arithmetic: `λ = max{forcing/C, max_{l ≤ N} ê_l/γ_l^k}`.
fn stage(
    setup: &CertificateSetup<'_>,
    q: u32,
    kappa_q: f64,
    forcing: f64,
    step_bound: f64,
) -> Result<LpCertificate> {
    let k = q as f64 / 2.0;
    let n_q = burn_in(setup.schedule, step_bound, setup.horizon)?;
    let (c_q, c_q_argmin) = tail_constant(setup.schedule, k, setup.c, n_q, setup.horizon)?;
    let moments = prefix_moments(
        setup.problem,
        setup.schedule,
        setup.theta0,
        n_q,
        &[q as f64],
        setup.master_seed,
        setup.mc_budget,
    )?;
    let mut lambda_q = forcing / c_q;
    let mut prefix_estimates = Vec::with_capacity(n_q as usize + 1);
    for l in 0..=n_q {
        let (e, se) = (moments.mean[0][l as usize], moments.std_error[0][l as usize]);
        lambda_q = lambda_q.max(e / setup.schedule.gamma(l)?.powf(k));
        prefix_estimates.push((l, e, se));
    }
    Ok(LpCertificate {
        q,
        k,
        kappa_q,
        lambda_q,
        n_q,
        c_q,
        c_q_argmin,
        horizon: setup.horizon,
        prefix_estimates,
        status: CertificateStatus::CertifiedEmpirical,
    })
}

/// Mean-square certificate under `E‖D_n‖² ≤ κ(1 + E‖Θ_{n−1} − ϑ‖²)`:
/// `N` from `γ_l ≤ min{c/(4κ), c}`, `λ₂ = max{2κ/C, max_{l≤N} ê_l/γ_l}`.
pub fn l2_bound_certificate(setup: &CertificateSetup<'_>, kappa: f64) -> Result<LpCertificate> {
    setup.validate()?;
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("kappa must be > 0, got {kappa}")));
    }
    let bound = (setup.c / (4.0 * kappa)).min(setup.c);
    stage(setup, 2, kappa, 2.0 * kappa, bound)
}

/// Certificates for `q = 2, 4, …, p`. `kappas[i]` is the centered noise
/// constant for `q = 2(i + 1)`; a single value is reused for all stages.
///
/// Stage `q ≥ 4` uses `κ_q = q·2^{q+1}·max{κ, 1}·max{λ_{q−2}, 1}`, burn-in
/// from `γ_l ≤ min{c/(2κ_q), c}` and `λ_q = max{κ_q/C_q, max_{l≤N} ê_l/γ_l^{q/2}}`.
/// The chain stops after the first failed stage, which is returned with
/// status `Failed`.
pub fn lp_induction_chain(setup: &CertificateSetup<'_>, kappas: &[f64], p: u32) -> Result<Vec<LpCertificate>> {
    check_even(p)?;
    setup.validate()?;
    let stages = (p / 2) as usize;
    if kappas.is_empty() || (kappas.len() != 1 && kappas.len() != stages) {
        return Err(Error::InvalidArgument(format!(
            "expected 1 or {stages} noise constants, got {}",
            kappas.len()
        )));
    }
    if kappas.iter().any(|k| !(*k > 0.0) || !k.is_finite()) {
        return Err(Error::InvalidArgument("noise constants must be > 0".into()));
    }
    let kappa_at = |i: usize| if kappas.len() == 1 { kappas[0] } else { kappas[i] };

    let report = check_admissibility(setup.schedule, setup.c, p / 2, setup.horizon.max(100), DEFAULT_TOL)?;
    if report.verdict == Verdict::Inadmissible {
        let k = report
            .per_k_min_tail
            .iter()
            .find(|t| t.min < 0.0)
            .map(|t| t.k)
            .unwrap_or(1);
        return Err(Error::NotAdmissible { k });
    }

    let mut out = Vec::with_capacity(stages);
    let first = match l2_bound_certificate(setup, kappa_at(0)) {
        Ok(cert) => cert,
        Err(e) => {
            out.push(LpCertificate::failed(2, kappa_at(0), setup.horizon, stage_failure(e)?));
            return Ok(out);
        }
    };
    let mut prev_lambda = first.lambda_q;
    out.push(first);
    for i in 1..stages {
        let q = 2 * (i as u32 + 1);
        let qf = q as f64;
        let kappa_q = qf * 2f64.powf(qf + 1.0) * kappa_at(i).max(1.0) * prev_lambda.max(1.0);
        let bound = (setup.c / (2.0 * kappa_q)).min(setup.c);
        match stage(setup, q, kappa_q, kappa_q, bound) {
            Ok(cert) => {
                prev_lambda = cert.lambda_q;
                out.push(cert);
            }
            Err(e) => {
                out.push(LpCertificate::failed(q, kappa_q, setup.horizon, stage_failure(e)?));
                break;
            }
        }
    }
    Ok(out)
}

/// Reasons that end the chain; anything else is a caller error.
fn stage_failure(e: Error) -> Result<String> {
    match e {
        Error::CertificateUnavailable(_)
        | Error::BurnInExceedsHorizon { .. }
        | Error::EnsembleDivergence { .. }
        | Error::Divergence { .. } => Ok(e.to_string()),
        other => Err(other),
    }
}

/// Sample mean and standard error of `‖Θ_n − ϑ‖^p` over the non-divergent
/// trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    /// NaN when fewer than two trajectories are used.
    pub std_error: f64,
    pub used: usize,
    pub excluded: usize,
}

pub fn moment_estimate(ensemble: &[Trajectory], target: &Point, p: f64, n: u64) -> Result<MomentEstimate> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("p must be > 0, got {p}")));
    }
    let mut vals = Vec::with_capacity(ensemble.len());
    let mut excluded = 0;
    for t in ensemble {
        if t.diverged_at.is_some() {
            excluded += 1;
            continue;
        }
        let th = t.state_at(n).ok_or(Error::MissingCheckpoint(n))?;
        th.check_dim(target.dim())?;
        vals.push(th.sub(target).norm_sq().powf(p / 2.0));
    }
    if vals.is_empty() {
        return Err(Error::EnsembleDivergence {
            count: excluded,
            total: ensemble.len(),
        });
    }
    let m = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / m;
    let std_error = if vals.len() < 2 {
        f64::NAN
    } else {
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    };
    Ok(MomentEstimate {
        mean,
        std_error,
        used: vals.len(),
        excluded,
    })
}

/// Strong error `(E‖Θ_n − ϑ‖^p)^{1/p}` with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpError {
    pub estimate: f64,
    pub std_error: f64,
    pub used: usize,
    pub excluded: usize,
}

pub fn lp_error(ensemble: &[Trajectory], target: &Point, p: f64, n: u64) -> Result<LpError> {
    let m = moment_estimate(ensemble, target, p, n)?;
    let estimate = m.mean.powf(1.0 / p);
    let std_error = if m.mean > 0.0 {
        m.mean.powf(1.0 / p - 1.0) / p * m.std_error
    } else {
        0.0
    };
    Ok(LpError {
        estimate,
        std_error,
        used: m.used,
        excluded: m.excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares of `ln(error)` against `ln(n)`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs >= 4 points, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|w| !(w[0].0 < w[1].0)) || !(points[0].0 > 0.0) {
        return Err(Error::InvalidArgument("n must be positive and strictly increasing".into()));
    }
    if let Some((n, e)) = points.iter().find(|(_, e)| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("error at n = {n} is {e}, must be > 0")));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Certified bound against the ensemble estimate at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceRow {
    pub n: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
}

impl DominanceRow {
    /// `estimate ≤ bound + 3·std_error`.
    pub fn holds(&self) -> bool {
        let se = if self.std_error.is_nan() { 0.0 } else { self.std_error };
        self.estimate <= self.bound + 3.0 * se
    }
}

pub fn dominance_check(
    cert: &LpCertificate,
    ensemble: &[Trajectory],
    target: &Point,
    schedule: &Schedule,
    checkpoints: &[u64],
) -> Result<Vec<DominanceRow>> {
    if !cert.is_certified() {
        return Err(Error::CertificateUnavailable(format!("stage q = {} failed", cert.q)));
    }
    checkpoints
        .iter()
        .map(|&n| {
            let m = moment_estimate(ensemble, target, cert.q as f64, n)?;
            Ok(DominanceRow {
                n,
                estimate: m.mean,
                std_error: m.std_error,
                bound: cert.bound_at(schedule, n)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMomentRow {
    pub theta: Point,
    /// Monte Carlo estimate of `E‖D‖^p`.
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `bound − estimate`.
    pub margin: f64,
}

impl NoiseMomentRow {
    pub fn passes(&self) -> bool {
        self.estimate <= self.bound + 4.0 * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMomentReport {
    pub spec: MomentBoundSpec,
    pub rows: Vec<NoiseMomentRow>,
}

impl NoiseMomentReport {
    pub fn passes(&self) -> bool {
        self.rows.iter().all(|r| r.passes())
    }

    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Compares Monte Carlo estimates of `E‖D‖^p` at each `θ` with the bound of
/// `spec`. Fails where an estimate exceeds the bound by more than 4
/// standard errors.
pub fn noise_moment_check(
    problem: &SaaProblem,
    spec: &MomentBoundSpec,
    thetas: &[Point],
    draws_per_theta: usize,
    seed: u64,
) -> Result<NoiseMomentReport> {
    if draws_per_theta < 1000 {
        return Err(Error::InvalidArgument(format!(
            "draws_per_theta must be >= 1000, got {draws_per_theta}"
        )));
    }
    let pf = spec.p as f64;
    let rows = thetas
        .par_iter()
        .enumerate()
        .map(|(i, th)| {
            th.check_dim(problem.dim())?;
            let mut rng = stream_rng(seed, i as u64);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for j in 0..draws_per_theta {
                seek_step(&mut rng, j as u64 + 1);
                let d = problem.draw_noise(th, 1, &mut rng)?;
                let v = dot(d.coords(), d.coords()).powf(pf / 2.0);
                sum += v;
                sum_sq += v * v;
            }
            let m = draws_per_theta as f64;
            let estimate = sum / m;
            let var = ((sum_sq / m - estimate * estimate) * m / (m - 1.0)).max(0.0);
            let r = match spec.form {
                MomentForm::Centered => th.sub(problem.target()).norm(),
                MomentForm::Uncentered => th.norm(),
            };
            let bound = spec.kappa * (1.0 + r.powf(pf));
            Ok(NoiseMomentRow {
                theta: th.clone(),
                estimate,
                std_error: (var / m).sqrt(),
                bound,
                margin: bound - estimate,
            })
        })
        .collect::<Result<_>>()?;
    Ok(NoiseMomentReport { spec: *spec, rows })
}
