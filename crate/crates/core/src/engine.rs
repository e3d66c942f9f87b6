//! The recursion `Θ_n = Θ_{n−1} + γ_n (g(Θ_{n−1}) + D_n)` and its SGD
//! specialization, with reproducible parallel ensembles.
//!
//! Noise is accepted only in centered form: a built-in symmetric law, or a
//! [`CenteredSource`] whose draw is `raw − E[raw | past]`. The martingale
//! difference property therefore holds by construction.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::drift::DriftField;
use crate::error::{Error, Result};
use crate::math::{dot, Point};
use crate::rng::{seek_step, seeded, stream_rng, StreamRng};
use crate::schedule::Schedule;

/// Largest checkpoint accepted by [`simulate`].
pub const MAX_CHECKPOINT: u64 = 10_000_000;

/// What a noise source may look at when drawing `D_n`.
pub struct StepContext<'a> {
    pub n: u64,
    pub theta_prev: &'a [f64],
    /// Per-trajectory memory, empty unless the source maintains it through
    /// [`CenteredSource::observe`].
    pub memory: &'a [f64],
}

/// A raw draw together with its conditional mean given the past.
pub trait CenteredSource: Send + Sync {
    fn raw(&self, ctx: &StepContext<'_>, rng: &mut StreamRng, out: &mut [f64]);
    fn conditional_mean(&self, ctx: &StepContext<'_>, out: &mut [f64]);

    /// Hook for history-dependent noise: called after every step with the
    /// new state. The default keeps no memory.
    fn observe(&self, _memory: &mut Vec<f64>, _n: u64, _theta: &[f64]) {}
}

#[derive(Clone)]
pub enum Noise {
    Zero,
    /// `N(0, σ²I)`
    Gaussian { sigma: f64 },
    /// Uniform on `[−h, h]^d`
    UniformBox { half_width: f64 },
    /// `raw − E[raw | past]`
    Centered(Arc<dyn CenteredSource>),
}

impl fmt::Debug for Noise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Noise::Zero => write!(f, "Zero"),
            Noise::Gaussian { sigma } => write!(f, "Gaussian {{ sigma: {sigma} }}"),
            Noise::UniformBox { half_width } => write!(f, "UniformBox {{ half_width: {half_width} }}"),
            Noise::Centered(_) => write!(f, "Centered(..)"),
        }
    }
}

impl Noise {
    /// Writes `D_n` into `out`; `scratch` has the same length.
    fn draw(&self, ctx: &StepContext<'_>, rng: &mut StreamRng, out: &mut [f64], scratch: &mut [f64]) {
        match self {
            Noise::Zero => out.iter_mut().for_each(|x| *x = 0.0),
            Noise::Gaussian { sigma } => {
                for x in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *x = sigma * z;
                }
            }
            Noise::UniformBox { half_width } => {
                for x in out.iter_mut() {
                    *x = half_width * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
            Noise::Centered(src) => {
                src.raw(ctx, rng, out);
                src.conditional_mean(ctx, scratch);
                for (o, m) in out.iter_mut().zip(scratch.iter()) {
                    *o -= m;
                }
            }
        }
    }

    fn observe(&self, memory: &mut Vec<f64>, n: u64, theta: &[f64]) {
        if let Noise::Centered(src) = self {
            src.observe(memory, n, theta);
        }
    }
}

#[derive(Clone, Debug)]
pub struct SaaProblem {
    pub drift: DriftField,
    pub noise: Noise,
    pub label: String,
}

impl SaaProblem {
    pub fn new(drift: DriftField, noise: Noise, label: impl Into<String>) -> Result<Self> {
        match noise {
            Noise::Gaussian { sigma } if !(sigma >= 0.0) || !sigma.is_finite() => {
                return Err(Error::InvalidArgument("sigma must be >= 0".into()))
            }
            Noise::UniformBox { half_width } if !(half_width >= 0.0) || !half_width.is_finite() => {
                return Err(Error::InvalidArgument("half_width must be >= 0".into()))
            }
            _ => {}
        }
        Ok(SaaProblem {
            drift,
            noise,
            label: label.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn target(&self) -> &Point {
        self.drift.target()
    }

    /// One draw of `D_n` at `θ_prev` with no memory.
    pub fn draw_noise(&self, theta_prev: &Point, n: u64, rng: &mut StreamRng) -> Result<Point> {
        theta_prev.check_dim(self.dim())?;
        let d = self.dim();
        let mut out = vec![0.0; d];
        let mut scratch = vec![0.0; d];
        let ctx = StepContext {
            n,
            theta_prev: theta_prev.coords(),
            memory: &[],
        };
        self.noise.draw(&ctx, rng, &mut out, &mut scratch);
        Ok(Point::from_vec_unchecked(out))
    }
}

type GradFn<S> = dyn Fn(&[f64], &S, &mut [f64]) + Send + Sync;
type SamplerFn<S> = dyn Fn(&mut StreamRng) -> S + Send + Sync;
type MeanGradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// An objective `F(θ, x)` accessed through its gradient in `θ`, a data
/// sampler, and optionally the mean gradient `E[∇_θF(θ, X)]`.
pub struct SgdProblem<S> {
    pub stochastic_gradient: Arc<GradFn<S>>,
    pub data_sampler: Arc<SamplerFn<S>>,
    pub mean_gradient: Option<Arc<MeanGradFn>>,
    /// The minimizer `ϑ`.
    pub target: Point,
    pub label: String,
}

impl<S> Clone for SgdProblem<S> {
    fn clone(&self) -> Self {
        SgdProblem {
            stochastic_gradient: self.stochastic_gradient.clone(),
            data_sampler: self.data_sampler.clone(),
            mean_gradient: self.mean_gradient.clone(),
            target: self.target.clone(),
            label: self.label.clone(),
        }
    }
}

struct SgdNoise<S> {
    grad: Arc<GradFn<S>>,
    sampler: Arc<SamplerFn<S>>,
    mean: Arc<MeanGradFn>,
}

impl<S> CenteredSource for SgdNoise<S> {
    fn raw(&self, ctx: &StepContext<'_>, rng: &mut StreamRng, out: &mut [f64]) {
        let x = (self.sampler)(rng);
        (self.grad)(ctx.theta_prev, &x, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }

    fn conditional_mean(&self, ctx: &StepContext<'_>, out: &mut [f64]) {
        (self.mean)(ctx.theta_prev, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Mean gradient estimated by averaging over a fixed set of `budget` data
/// draws (seeded, so the induced drift is a deterministic function).
fn estimated_mean_gradient<S: Send + Sync + 'static>(
    sgd: &SgdProblem<S>,
    budget: usize,
    seed: u64,
) -> Arc<MeanGradFn> {
    let mut rng = seeded(seed);
    let data: Vec<S> = (0..budget).map(|_| (sgd.data_sampler)(&mut rng)).collect();
    let grad = sgd.stochastic_gradient.clone();
    Arc::new(move |theta, out| {
        let mut tmp = vec![0.0; out.len()];
        out.iter_mut().for_each(|v| *v = 0.0);
        for x in &data {
            grad(theta, x, &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += t;
            }
        }
        let m = data.len() as f64;
        out.iter_mut().for_each(|v| *v /= m);
    })
}

/// Options for [`from_sgd`] when the mean gradient is not supplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanEstimation {
    Disabled,
    MonteCarlo { budget: usize, seed: u64 },
}

/// `g(θ) = −E[∇F(θ, X)]` and `D_n = E[∇F(Θ_{n−1}, X)] − ∇F(Θ_{n−1}, X_n)`,
/// so that `g + D_n = −∇F(Θ_{n−1}, X_n)`.
pub fn from_sgd<S: Send + Sync + 'static>(
    sgd: &SgdProblem<S>,
    estimation: MeanEstimation,
) -> Result<SaaProblem> {
    let mean = match (&sgd.mean_gradient, estimation) {
        (Some(m), _) => m.clone(),
        (None, MeanEstimation::MonteCarlo { budget, seed }) if budget > 0 => {
            estimated_mean_gradient(sgd, budget, seed)
        }
        _ => return Err(Error::MeanGradientUnavailable),
    };
    let m2 = mean.clone();
    let drift = DriftField::new(sgd.target.clone(), format!("sgd:{}", sgd.label), move |th, out| {
        m2(th, out);
        out.iter_mut().for_each(|v| *v = -*v);
    });
    let noise = Noise::Centered(Arc::new(SgdNoise {
        grad: sgd.stochastic_gradient.clone(),
        sampler: sgd.data_sampler.clone(),
        mean,
    }));
    SaaProblem::new(drift, noise, sgd.label.clone())
}

/// Reusable buffers for stepping one trajectory.
struct Stepper<'a> {
    problem: &'a SaaProblem,
    schedule: &'a Schedule,
    g: Vec<f64>,
    noise: Vec<f64>,
    scratch: Vec<f64>,
    memory: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(problem: &'a SaaProblem, schedule: &'a Schedule) -> Self {
        let d = problem.dim();
        Stepper {
            problem,
            schedule,
            g: vec![0.0; d],
            noise: vec![0.0; d],
            scratch: vec![0.0; d],
            memory: Vec::new(),
        }
    }

    /// Advances `theta` from step `n − 1` to `n` in place.
    fn advance(&mut self, theta: &mut [f64], n: u64, rng: &mut StreamRng) -> Result<()> {
        let gamma = self.schedule.gamma(n)?;
        seek_step(rng, n);
        self.problem.drift.eval_into(theta, &mut self.g);
        let ctx = StepContext {
            n,
            theta_prev: theta,
            memory: &self.memory,
        };
        self.problem
            .noise
            .draw(&ctx, rng, &mut self.noise, &mut self.scratch);
        let mut finite = true;
        for ((t, g), d) in theta.iter_mut().zip(&self.g).zip(&self.noise) {
            *t += gamma * (g + d);
            finite &= t.is_finite();
        }
        if !finite {
            return Err(Error::Divergence { n });
        }
        self.problem.noise.observe(&mut self.memory, n, theta);
        Ok(())
    }
}

/// `θ_prev + γ_n (g(θ_prev) + D_n)`, drawing from `rng` at the block for
/// step `n`.
pub fn step(
    problem: &SaaProblem,
    theta_prev: &Point,
    n: u64,
    schedule: &Schedule,
    rng: &mut StreamRng,
) -> Result<Point> {
    if n < 1 {
        return Err(Error::InvalidArgument("step index must be >= 1".into()));
    }
    theta_prev.check_dim(problem.dim())?;
    let mut theta = theta_prev.coords().to_vec();
    Stepper::new(problem, schedule).advance(&mut theta, n, rng)?;
    Ok(Point::from_vec_unchecked(theta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(n, Θ_n)` at the requested checkpoints reached before divergence.
    pub checkpoints: Vec<(u64, Point)>,
    pub seed: u64,
    pub stream: u64,
    pub schedule: String,
    /// First step with a non-finite state.
    pub diverged_at: Option<u64>,
}

impl Trajectory {
    pub fn state_at(&self, n: u64) -> Option<&Point> {
        self.checkpoints
            .binary_search_by_key(&n, |(m, _)| *m)
            .ok()
            .map(|i| &self.checkpoints[i].1)
    }
}

fn validate_checkpoints(checkpoints: &[u64], schedule: &Schedule) -> Result<()> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "checkpoints must be strictly increasing".into(),
        ));
    }
    if let Some(&last) = checkpoints.last() {
        if last > MAX_CHECKPOINT {
            return Err(Error::InvalidArgument(format!(
                "checkpoint {last} exceeds {MAX_CHECKPOINT}"
            )));
        }
        schedule.require_len(last)?;
    }
    Ok(())
}

fn run_stream(
    problem: &SaaProblem,
    schedule: &Schedule,
    theta0: &Point,
    checkpoints: &[u64],
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    let mut rng = stream_rng(seed, stream);
    let mut stepper = Stepper::new(problem, schedule);
    let mut theta = theta0.coords().to_vec();
    let mut recorded = Vec::with_capacity(checkpoints.len());
    let mut diverged_at = None;
    let mut n = 0;
    'outer: for &cp in checkpoints {
        while n < cp {
            n += 1;
            match stepper.advance(&mut theta, n, &mut rng) {
                Ok(()) => {}
                Err(Error::Divergence { n }) => {
                    diverged_at = Some(n);
                    break 'outer;
                }
                Err(e) => return Err(e),
            }
        }
        recorded.push((cp, Point::from_vec_unchecked(theta.clone())));
    }
    Ok(Trajectory {
        checkpoints: recorded,
        seed,
        stream,
        schedule: schedule.to_string(),
        diverged_at,
    })
}

/// One trajectory on stream 0 of `seed`.
pub fn simulate(
    problem: &SaaProblem,
    schedule: &Schedule,
    theta0: &Point,
    checkpoints: &[u64],
    seed: u64,
) -> Result<Trajectory> {
    theta0.check_dim(problem.dim())?;
    validate_checkpoints(checkpoints, schedule)?;
    run_stream(problem, schedule, theta0, checkpoints, seed, 0)
}

/// `m` trajectories; trajectory `i` runs on stream `i` of `master_seed`.
/// Runs on the current rayon pool; the result does not depend on its size.
pub fn simulate_ensemble(
    problem: &SaaProblem,
    schedule: &Schedule,
    theta0: &Point,
    checkpoints: &[u64],
    master_seed: u64,
    m: usize,
) -> Result<Vec<Trajectory>> {
    if m < 1 {
        return Err(Error::InvalidArgument("ensemble size must be >= 1".into()));
    }
    theta0.check_dim(problem.dim())?;
    validate_checkpoints(checkpoints, schedule)?;
    (0..m as u64)
        .into_par_iter()
        .map(|i| run_stream(problem, schedule, theta0, checkpoints, master_seed, i))
        .collect()
}

pub fn divergence_count(ensemble: &[Trajectory]) -> usize {
    ensemble.iter().filter(|t| t.diverged_at.is_some()).count()
}

/// Dyadic checkpoints `2^lo, …, 2^hi`.
pub fn dyadic_checkpoints(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|j| 1u64 << j).collect()
}

/// Writes the ensemble as CSV: a `# d=..,seed=..,schedule=..` line, the
/// header `trajectory_id,n,coord_0,…`, then one row per recorded checkpoint.
pub fn write_ensemble_csv<W: Write>(
    mut w: W,
    ensemble: &[Trajectory],
    dim: usize,
    master_seed: u64,
) -> Result<()> {
    let schedule = ensemble.first().map(|t| t.schedule.as_str()).unwrap_or("");
    writeln!(w, "# d={dim},seed={master_seed},schedule={schedule}")?;
    let mut header = String::from("trajectory_id,n");
    for j in 0..dim {
        header.push_str(&format!(",coord_{j}"));
    }
    writeln!(w, "{header}")?;
    for t in ensemble {
        for (n, p) in &t.checkpoints {
            let mut line = format!("{},{}", t.stream, n);
            for x in p.coords() {
                line.push_str(&format!(",{x:.16e}"));
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

/// Empirical mean of `draws` noise draws at `θ`, with the standard error of
/// its norm (root of the summed per-coordinate variances of the mean).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMeanCheck {
    pub theta: Point,
    pub mean_norm: f64,
    pub std_error: f64,
}

impl NoiseMeanCheck {
    /// Within 4 standard errors of zero.
    pub fn passes(&self) -> bool {
        self.mean_norm <= 4.0 * self.std_error + 1e-300
    }
}

pub fn noise_mean_check(
    problem: &SaaProblem,
    thetas: &[Point],
    draws: usize,
    seed: u64,
) -> Result<Vec<NoiseMeanCheck>> {
    if draws < 2 {
        return Err(Error::InvalidArgument("need at least 2 draws".into()));
    }
    thetas
        .par_iter()
        .enumerate()
        .map(|(i, th)| {
            th.check_dim(problem.dim())?;
            let d = problem.dim();
            let mut rng = stream_rng(seed, i as u64);
            let mut sum = vec![0.0; d];
            let mut sum_sq = vec![0.0; d];
            for k in 0..draws {
                seek_step(&mut rng, k as u64 + 1);
                let x = problem.draw_noise(th, 1, &mut rng)?;
                for j in 0..d {
                    sum[j] += x[j];
                    sum_sq[j] += x[j] * x[j];
                }
            }
            let m = draws as f64;
            let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
            let var_of_mean: f64 = (0..d)
                .map(|j| ((sum_sq[j] / m - mean[j] * mean[j]) * m / (m - 1.0)).max(0.0) / m)
                .sum();
            Ok(NoiseMeanCheck {
                theta: th.clone(),
                mean_norm: dot(&mean, &mean).sqrt(),
                std_error: var_of_mean.sqrt(),
            })
        })
        .collect()
}

/// Trajectories per accumulation block in [`prefix_moments`].
const PREFIX_BLOCK: usize = 64;
/// Blocks handled per parallel round in [`prefix_moments`].
const PREFIX_ROUND: usize = 16;

/// Per-step Monte Carlo moments `E‖Θ_l − ϑ‖^q` for `l = 0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixMoments {
    pub powers: Vec<f64>,
    /// `mean[j][l]` estimates `E‖Θ_l − ϑ‖^{powers[j]}`.
    pub mean: Vec<Vec<f64>>,
    /// Standard error of `mean[j][l]`; NaN for a single trajectory.
    pub std_error: Vec<Vec<f64>>,
    pub trajectories: usize,
}

struct BlockSums {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    diverged: usize,
}

fn prefix_block(
    problem: &SaaProblem,
    schedule: &Schedule,
    theta0: &Point,
    n_max: u64,
    powers: &[f64],
    seed: u64,
    streams: std::ops::Range<u64>,
) -> Result<BlockSums> {
    let len = n_max as usize + 1;
    let np = powers.len();
    let mut out = BlockSums {
        sum: vec![0.0; len * np],
        sum_sq: vec![0.0; len * np],
        diverged: 0,
    };
    let target = problem.target().coords();
    let record = |out: &mut BlockSums, l: usize, theta: &[f64]| {
        let r2: f64 = theta.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        for (j, p) in powers.iter().enumerate() {
            let v = r2.powf(p / 2.0);
            out.sum[j * len + l] += v;
            out.sum_sq[j * len + l] += v * v;
        }
    };
    for stream in streams {
        let mut rng = stream_rng(seed, stream);
        let mut stepper = Stepper::new(problem, schedule);
        let mut theta = theta0.coords().to_vec();
        record(&mut out, 0, &theta);
        for n in 1..=n_max {
            match stepper.advance(&mut theta, n, &mut rng) {
                Ok(()) => record(&mut out, n as usize, &theta),
                Err(Error::Divergence { .. }) => {
                    out.diverged += 1;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Estimates `E‖Θ_l − ϑ‖^q` for every `l ≤ n_max` and every `q` in `powers`
/// from `m` trajectories (stream `i` of `master_seed` for trajectory `i`).
///
/// Sums are accumulated per fixed block of trajectories and the blocks are
/// combined in order, so the result does not depend on the thread count and
/// memory stays proportional to `n_max`, not to `m · n_max`. Any divergent
/// trajectory is an error.
pub fn prefix_moments(
    problem: &SaaProblem,
    schedule: &Schedule,
    theta0: &Point,
    n_max: u64,
    powers: &[f64],
    master_seed: u64,
    m: usize,
) -> Result<PrefixMoments> {
    if m < 1 {
        return Err(Error::InvalidArgument("ensemble size must be >= 1".into()));
    }
    if powers.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidArgument("powers must be > 0".into()));
    }
    theta0.check_dim(problem.dim())?;
    if n_max > MAX_CHECKPOINT {
        return Err(Error::InvalidArgument(format!(
            "prefix length {n_max} exceeds {MAX_CHECKPOINT}"
        )));
    }
    schedule.require_len(n_max)?;
    let len = n_max as usize + 1;
    let np = powers.len();
    let mut sum = vec![0.0; len * np];
    let mut sum_sq = vec![0.0; len * np];
    let mut diverged = 0;
    let blocks = m.div_ceil(PREFIX_BLOCK);
    for round in (0..blocks).step_by(PREFIX_ROUND) {
        let results: Vec<BlockSums> = (round..(round + PREFIX_ROUND).min(blocks))
            .into_par_iter()
            .map(|b| {
                let lo = (b * PREFIX_BLOCK) as u64;
                let hi = ((b + 1) * PREFIX_BLOCK).min(m) as u64;
                prefix_block(problem, schedule, theta0, n_max, powers, master_seed, lo..hi)
            })
            .collect::<Result<_>>()?;
        for r in results {
            diverged += r.diverged;
            sum.iter_mut().zip(&r.sum).for_each(|(a, b)| *a += b);
            sum_sq.iter_mut().zip(&r.sum_sq).for_each(|(a, b)| *a += b);
        }
    }
    if diverged > 0 {
        return Err(Error::EnsembleDivergence {
            count: diverged,
            total: m,
        });
    }
    let mf = m as f64;
    let mut mean = Vec::with_capacity(np);
    let mut std_error = Vec::with_capacity(np);
    for j in 0..np {
        let s = &sum[j * len..(j + 1) * len];
        let s2 = &sum_sq[j * len..(j + 1) * len];
        mean.push(s.iter().map(|x| x / mf).collect());
        std_error.push(
            s.iter()
                .zip(s2)
                .map(|(a, b)| {
                    if m < 2 {
                        return f64::NAN;
                    }
                    let mu = a / mf;
                    ((b / mf - mu * mu).max(0.0) * mf / (mf - 1.0) / mf).sqrt()
                })
                .collect(),
        );
    }
    Ok(PrefixMoments {
        powers: powers.to_vec(),
        mean,
        std_error,
        trajectories: m,
    })
}
