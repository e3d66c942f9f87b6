//! Least-squares regression `F(θ, x) = (⟨θ, x⟩ − h(x))²` as an SGD problem
//! with closed-form minimizer `ϑ = E[XXᵀ]⁻¹ E[h(X)X]`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::drift::unit_directions;
use crate::engine::SgdProblem;
use crate::error::{Error, Result};
use crate::math::{dot, parse_key_values, parse_vector, Point};
use crate::rng::{seeded, StreamRng};

/// Largest accepted condition number of `E[XXᵀ]`.
pub const MAX_CONDITION: f64 = 1e12;
/// Directions used for the diagnostic sharp constant.
pub const SHARP_DIRECTIONS: usize = 10_000;

/// One data draw `(x, h(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinregSample {
    pub x: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    pub prob: f64,
    pub x: Vec<f64>,
    pub h: f64,
}

type XSampler = dyn Fn(&mut StreamRng) -> LinregSample + Send + Sync;

#[derive(Clone)]
pub struct RegressionModel {
    dim: usize,
    sampler: Arc<XSampler>,
    exact_moments: Option<(DMatrix<f64>, DVector<f64>)>,
    support: Option<Vec<SupportPoint>>,
    label: String,
}

impl fmt::Debug for RegressionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RegressionModel({})", self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    Exact,
    Enumerated,
    Estimated,
}

impl fmt::Display for MomentSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MomentSource::Exact => "exact",
            MomentSource::Enumerated => "enumerated",
            MomentSource::Estimated => "estimated",
        })
    }
}

impl RegressionModel {
    /// A model with a user-supplied sampler; moments come from Monte Carlo
    /// unless `exact_moments` is given.
    pub fn from_sampler<F>(
        dim: usize,
        label: impl Into<String>,
        exact_moments: Option<(DMatrix<f64>, DVector<f64>)>,
        sampler: F,
    ) -> Self
    where
        F: Fn(&mut StreamRng) -> LinregSample + Send + Sync + 'static,
    {
        RegressionModel {
            dim,
            sampler: Arc::new(sampler),
            exact_moments,
            support: None,
            label: label.into(),
        }
    }

    /// Finite support; probabilities must be positive and sum to 1.
    pub fn from_support(points: Vec<SupportPoint>, label: impl Into<String>) -> Result<Self> {
        let dim = points
            .first()
            .map(|p| p.x.len())
            .ok_or_else(|| Error::InvalidArgument("empty support".into()))?;
        if dim == 0 {
            return Err(Error::InvalidArgument("support points need d >= 1".into()));
        }
        let mut total = 0.0;
        for p in &points {
            if p.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.x.len(),
                });
            }
            if !(p.prob > 0.0) || p.x.iter().chain([&p.h]).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "support probabilities must be > 0 and values finite".into(),
                ));
            }
            total += p.prob;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "support probabilities sum to {total}, not 1"
            )));
        }
        let cumulative: Vec<f64> = points
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p.prob;
                Some(*acc)
            })
            .collect();
        let pts = points.clone();
        let sampler = move |rng: &mut StreamRng| {
            let u: f64 = rng.random::<f64>() * total;
            let i = cumulative.partition_point(|c| *c <= u).min(pts.len() - 1);
            LinregSample {
                x: pts[i].x.clone(),
                h: pts[i].h,
            }
        };
        Ok(RegressionModel {
            dim,
            sampler: Arc::new(sampler),
            exact_moments: None,
            support: Some(points),
            label: label.into(),
        })
    }

    /// `X` uniform on `{−1, 2}`, `h(x) = x²`.
    pub fn two_point() -> Self {
        let mut m = RegressionModel::from_support(
            vec![
                SupportPoint { prob: 0.5, x: vec![-1.0], h: 1.0 },
                SupportPoint { prob: 0.5, x: vec![2.0], h: 4.0 },
            ],
            "linreg:two_point",
        )
        .expect("valid support");
        m.sampler = Arc::new(|rng: &mut StreamRng| {
            if rng.random::<bool>() {
                LinregSample { x: vec![2.0], h: 4.0 }
            } else {
                LinregSample { x: vec![-1.0], h: 1.0 }
            }
        });
        m
    }

    /// `X ~ N(0, cov)`, `h(x) = ⟨β, x⟩`.
    pub fn gaussian(beta: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = beta.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        check_symmetric(&cov)?;
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite(min_eigenvalue(&cov)))?;
        let l = chol.l();
        let b = &cov * DVector::from_vec(beta.clone());
        let label = format!(
            "linreg:gauss:d={d},beta={},cov={}",
            join(&beta),
            join(cov.transpose().as_slice())
        );
        let beta2 = beta.clone();
        Ok(RegressionModel::from_sampler(
            d,
            label,
            Some((cov, b)),
            move |rng| {
                let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let x: Vec<f64> = (0..d)
                    .map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum())
                    .collect();
                let h = dot(&beta2, &x);
                LinregSample { x, h }
            },
        ))
    }

    /// Reads a support table: one row `probability, x_1, …, x_d, h` per line.
    pub fn from_support_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("line {}: bad number", i + 1)))?;
            if vals.len() < 3 {
                return Err(Error::Parse(format!(
                    "line {}: need probability, x coords, h",
                    i + 1
                )));
            }
            points.push(SupportPoint {
                prob: vals[0],
                x: vals[1..vals.len() - 1].to_vec(),
                h: vals[vals.len() - 1],
            });
        }
        RegressionModel::from_support(points, format!("linreg:custom:{}", path.display()))
            .map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses `linreg:two_point`, `linreg:gauss:d=..,beta=..,cov=..` or
    /// `linreg:custom:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let rest = spec
            .strip_prefix("linreg:")
            .ok_or_else(|| Error::Parse(format!("unrecognized model '{spec}'")))?;
        if rest == "two_point" {
            Ok(RegressionModel::two_point())
        } else if let Some(args) = rest.strip_prefix("gauss:") {
            let mut d = None;
            let mut beta = None;
            let mut cov = None;
            for (k, v) in parse_key_values(args)? {
                match k.as_str() {
                    "d" => {
                        d = Some(
                            v.parse::<usize>()
                                .map_err(|_| Error::Parse(format!("bad dimension '{v}'")))?,
                        )
                    }
                    "beta" => beta = Some(parse_vector(&v)?),
                    "cov" => cov = Some(parse_vector(&v)?),
                    _ => return Err(Error::Parse(format!("unknown model key '{k}'"))),
                }
            }
            let beta = beta.ok_or_else(|| Error::Parse("missing beta".into()))?;
            let d = d.unwrap_or(beta.len());
            if beta.len() != d {
                return Err(Error::Parse(format!("beta has {} entries, d = {d}", beta.len())));
            }
            let cov = match cov {
                Some(c) if c.len() == d * d => DMatrix::from_row_slice(d, d, &c),
                Some(c) => {
                    return Err(Error::Parse(format!(
                        "cov has {} entries, expected {}",
                        c.len(),
                        d * d
                    )))
                }
                None => DMatrix::identity(d, d),
            };
            RegressionModel::gaussian(beta, cov).map_err(|e| Error::Parse(e.to_string()))
        } else if let Some(path) = rest.strip_prefix("custom:") {
            RegressionModel::from_support_file(Path::new(path))
        } else {
            Err(Error::Parse(format!("unrecognized model '{spec}'")))
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> Option<&[SupportPoint]> {
        self.support.as_deref()
    }

    pub fn sample(&self, rng: &mut StreamRng) -> LinregSample {
        (self.sampler)(rng)
    }

    /// `E[f(X, h(X))]` by enumeration over the support, else by Monte Carlo
    /// with `mc_budget` draws.
    pub fn expectation(
        &self,
        f: impl Fn(&[f64], f64) -> f64 + Sync,
        mc_budget: usize,
        seed: u64,
    ) -> (f64, MomentSource) {
        match &self.support {
            Some(pts) => (
                pts.iter().map(|p| p.prob * f(&p.x, p.h)).sum(),
                MomentSource::Enumerated,
            ),
            None => {
                let mut rng = seeded(seed);
                let mut acc = 0.0;
                for _ in 0..mc_budget {
                    let s = self.sample(&mut rng);
                    acc += f(&s.x, s.h);
                }
                (acc / mc_budget.max(1) as f64, MomentSource::Estimated)
            }
        }
    }

    /// `(E[XXᵀ], E[h(X)X])`, preferring exact moments, then enumeration,
    /// then Monte Carlo.
    pub fn moments(&self, mc_budget: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>, MomentSource) {
        let d = self.dim;
        if let Some((m2, b)) = &self.exact_moments {
            return (m2.clone(), b.clone(), MomentSource::Exact);
        }
        let mut m2 = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        let mut add = |w: f64, x: &[f64], h: f64| {
            for i in 0..d {
                b[i] += w * h * x[i];
                for j in 0..d {
                    m2[(i, j)] += w * x[i] * x[j];
                }
            }
        };
        let source = match &self.support {
            Some(pts) => {
                for p in pts {
                    add(p.prob, &p.x, p.h);
                }
                MomentSource::Enumerated
            }
            None => {
                let mut rng = seeded(seed);
                let w = 1.0 / mc_budget.max(1) as f64;
                for _ in 0..mc_budget {
                    let s = self.sample(&mut rng);
                    add(w, &s.x, s.h);
                }
                MomentSource::Estimated
            }
        };
        (m2, b, source)
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSymmetric);
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for i in 0..a.nrows() {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    Ok(())
}

fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}

/// `ϑ = E[XXᵀ]⁻¹ E[h(X)X]` with the source of the moments.
pub fn true_minimizer(model: &RegressionModel, mc_budget: usize, seed: u64) -> Result<(Point, MomentSource)> {
    let (m2, b, source) = model.moments(mc_budget, seed);
    Ok((solve_minimizer(&m2, &b)?, source))
}

fn solve_minimizer(m2: &DMatrix<f64>, b: &DVector<f64>) -> Result<Point> {
    check_symmetric(m2)?;
    let eig = SymmetricEigen::new(m2.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        return Err(Error::IllConditioned(cond));
    }
    let sol = m2
        .clone()
        .cholesky()
        .ok_or(Error::IllConditioned(hi / lo))?
        .solve(b);
    Point::new(sol.iter().copied().collect())
}

/// `∇_θF(θ, x) = 2(⟨θ, x⟩ − h)x`.
pub fn gradient(theta: &Point, x: &Point, h: f64) -> Result<Point> {
    x.check_dim(theta.dim())?;
    let mut out = vec![0.0; theta.dim()];
    gradient_into(theta.coords(), x.coords(), h, &mut out);
    Ok(Point::from_vec_unchecked(out))
}

#[inline]
fn gradient_into(theta: &[f64], x: &[f64], h: f64, out: &mut [f64]) {
    let r = 2.0 * (dot(theta, x) - h);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = r * xi;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdConstant {
    pub c: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub sharp_c: Option<f64>,
}

/// For symmetric positive definite `A`: `c = λ_min·min{1, 1/λ_max²}`, which
/// gives `⟨θ, Aθ⟩ ≥ c·max{‖θ‖², ‖Aθ‖²}`. The diagnostic `sharp_c` is the
/// minimum of `⟨v, Av⟩/max{1, ‖Av‖²}` over unit directions (a uniform grid
/// plus the eigenvectors).
pub fn spd_contraction_constant(a: &DMatrix<f64>) -> Result<SpdConstant> {
    check_symmetric(a)?;
    let eig = SymmetricEigen::new(a.clone());
    let lambda_min = eig.eigenvalues.min();
    let lambda_max = eig.eigenvalues.max();
    if !(lambda_min > 0.0) {
        return Err(Error::NotPositiveDefinite(lambda_min));
    }
    let c = lambda_min * (1.0f64).min(1.0 / (lambda_max * lambda_max));

    let d = a.nrows();
    let mut dirs: Vec<Vec<f64>> = unit_directions(d, SHARP_DIRECTIONS, 0x5eed)
        .into_iter()
        .map(Point::into_vec)
        .collect();
    for k in 0..d {
        dirs.push(eig.eigenvectors.column(k).iter().copied().collect());
    }
    let sharp = dirs
        .par_iter()
        .map(|v| {
            let av = a * DVector::from_column_slice(v);
            let num = dot(v, av.as_slice());
            num / dot(v, v).max(av.norm_squared())
        })
        .reduce(|| f64::INFINITY, f64::min);

    Ok(SpdConstant {
        c,
        lambda_min,
        lambda_max,
        sharp_c: Some(sharp),
    })
}

/// The SGD problem of a regression model with its closed-form pieces.
#[derive(Clone)]
pub struct LinregProblem {
    pub sgd: SgdProblem<LinregSample>,
    pub theta_star: Point,
    pub m2: DMatrix<f64>,
    pub b: DVector<f64>,
    pub source: MomentSource,
}

/// Stochastic gradient `2(⟨θ,x⟩ − h)x`, mean gradient `2M2θ − 2b`.
pub fn build_sgd_problem(model: &RegressionModel, mc_budget: usize, seed: u64) -> Result<LinregProblem> {
    let (m2, b, source) = model.moments(mc_budget, seed);
    let theta_star = solve_minimizer(&m2, &b)?;
    let m2c = m2.clone();
    let bc = b.clone();
    let d = model.dim();
    let sampler = model.sampler.clone();
    let sgd = SgdProblem {
        stochastic_gradient: Arc::new(|th: &[f64], s: &LinregSample, out: &mut [f64]| {
            gradient_into(th, &s.x, s.h, out)
        }),
        data_sampler: Arc::new(move |rng: &mut StreamRng| sampler(rng)),
        mean_gradient: Some(Arc::new(move |th: &[f64], out: &mut [f64]| {
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += m2c[(i, j)] * th[j];
                }
                out[i] = 2.0 * acc - 2.0 * bc[i];
            }
        })),
        target: theta_star.clone(),
        label: model.label().to_string(),
    };
    Ok(LinregProblem {
        sgd,
        theta_star,
        m2,
        b,
        source,
    })
}

/// Noise moment constants for `E‖D‖^p ≤ κ(…)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseKappa {
    pub p: u32,
    /// Bound in `1 + ‖θ‖^p` from the uncentered proof estimate
    /// `2^{3p+2} max{E‖X‖^{2p}, E‖hX‖^p, (‖ϑ‖/c)^p, c^{−p}}`.
    pub uncentered_proof: f64,
    /// The same bound converted to `1 + ‖θ−ϑ‖^p` via
    /// `1 + ‖θ‖^p ≤ max{1 + 2^p‖ϑ‖^p, 2^p}(1 + ‖θ−ϑ‖^p)`.
    pub centered_from_proof: f64,
    /// Direct centered bound from `D = 2[(M2 − XXᵀ)(θ−ϑ) + (hX − XXᵀϑ)]`:
    /// `2^{2p−1} max{E‖M2 − XXᵀ‖_op^p, E‖hX − XXᵀϑ‖^p}`.
    pub centered_direct: f64,
    pub source: MomentSource,
}

pub fn noise_kappa(problem: &LinregProblem, model: &RegressionModel, c: f64, p: u32, mc_budget: usize, seed: u64) -> Result<NoiseKappa> {
    if p < 1 || !(c > 0.0) {
        return Err(Error::InvalidArgument("need p >= 1 and c > 0".into()));
    }
    let pf = p as f64;
    let pi = p as i32;
    let ts = problem.theta_star.coords().to_vec();
    let ts_norm = problem.theta_star.norm();
    let (ex2p, source) = model.expectation(|x, _| dot(x, x).powi(pi), mc_budget, seed);
    let (ehx, _) = model.expectation(|x, h| (h.abs() * dot(x, x).sqrt()).powi(pi), mc_budget, seed);
    let frak = 1.0 / c;
    let uncentered = 2f64.powf(3.0 * pf + 2.0)
        * ex2p
            .max(ehx)
            .max((frak * ts_norm).powi(pi))
            .max(frak.powi(pi));
    let factor = (1.0 + 2f64.powi(pi) * ts_norm.powi(pi)).max(2f64.powi(pi));

    let m2 = problem.m2.clone();
    let d = model.dim();
    let (eop, _) = model.expectation(
        |x, _| {
            let xv = DVector::from_column_slice(x);
            let diff = &m2 - &xv * xv.transpose();
            let e = SymmetricEigen::new(diff).eigenvalues;
            e.amax().powi(pi)
        },
        mc_budget,
        seed,
    );
    let (eres, _) = model.expectation(
        |x, h| {
            let xt = dot(x, &ts);
            let v: Vec<f64> = (0..d).map(|i| h * x[i] - x[i] * xt).collect();
            dot(&v, &v).sqrt().powi(pi)
        },
        mc_budget,
        seed,
    );
    let direct = 2f64.powf(2.0 * pf - 1.0) * eop.max(eres);
    Ok(NoiseKappa {
        p,
        uncentered_proof: uncentered,
        centered_from_proof: uncentered * factor,
        centered_direct: direct,
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterchangeRow {
    pub theta: Point,
    pub fd_gradient: Point,
    pub mean_gradient: Point,
    /// Largest coordinate discrepancy.
    pub discrepancy: f64,
    /// Truncation/rounding allowance plus 4 standard errors.
    pub allowed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterchangeReport {
    pub rows: Vec<InterchangeRow>,
    pub source: MomentSource,
}

impl InterchangeReport {
    pub fn passes(&self) -> bool {
        self.rows.iter().all(|r| r.discrepancy <= r.allowed)
    }

    pub fn max_discrepancy(&self) -> f64 {
        self.rows.iter().map(|r| r.discrepancy).fold(0.0, f64::max)
    }
}

/// Central differences of `θ ↦ E[F(θ, X)]` against the closed-form mean
/// gradient. Support models are enumerated exactly; otherwise `mc_budget`
/// common draws are reused across the stencil.
pub fn interchange_check(
    model: &RegressionModel,
    thetas: &[Point],
    mc_budget: usize,
    fd_step: f64,
    seed: u64,
) -> Result<InterchangeReport> {
    if !(fd_step > 0.0) {
        return Err(Error::InvalidArgument("fd_step must be > 0".into()));
    }
    let problem = build_sgd_problem(model, mc_budget, seed)?;
    let d = model.dim();
    let data: Vec<(f64, LinregSample)> = match model.support() {
        Some(pts) => pts
            .iter()
            .map(|p| (p.prob, LinregSample { x: p.x.clone(), h: p.h }))
            .collect(),
        None => {
            if mc_budget < 10_000 {
                return Err(Error::InvalidArgument("mc_budget must be >= 10^4".into()));
            }
            let mut rng = seeded(seed ^ 0x1a7e_c4a9);
            let w = 1.0 / mc_budget as f64;
            (0..mc_budget).map(|_| (w, model.sample(&mut rng))).collect()
        }
    };
    let enumerated = model.support().is_some();
    let f = |th: &[f64], s: &LinregSample| {
        let r = dot(th, &s.x) - s.h;
        r * r
    };
    let mean_grad = problem.sgd.mean_gradient.clone().expect("closed form");

    let rows = thetas
        .iter()
        .map(|th| {
            th.check_dim(d)?;
            let mut fd = vec![0.0; d];
            let mut allowed = vec![0.0; d];
            for j in 0..d {
                let mut plus = th.coords().to_vec();
                let mut minus = th.coords().to_vec();
                plus[j] += fd_step;
                minus[j] -= fd_step;
                let mut mean = 0.0;
                let mut mean_sq = 0.0;
                let mut magnitude = 0.0;
                for (w, s) in &data {
                    let (fp, fm) = (f(&plus, s), f(&minus, s));
                    let q = (fp - fm) / (2.0 * fd_step);
                    mean += w * q;
                    mean_sq += w * q * q;
                    magnitude += w * fp.abs().max(fm.abs());
                }
                fd[j] = mean;
                let se = if enumerated {
                    0.0
                } else {
                    ((mean_sq - mean * mean).max(0.0) / data.len() as f64).sqrt()
                };
                // F is quadratic in θ: the central difference has no
                // truncation error, only rounding of order ε·|F|/h
                let rounding = 64.0 * f64::EPSILON * (magnitude + 1.0) / fd_step;
                allowed[j] = rounding + 4.0 * se;
            }
            let mut mg = vec![0.0; d];
            mean_grad(th.coords(), &mut mg);
            let (discrepancy, allowed) = fd
                .iter()
                .zip(&mg)
                .zip(&allowed)
                .map(|((a, b), t)| ((a - b).abs(), *t))
                .fold((0.0f64, f64::INFINITY), |(dm, am), (dv, av)| (dm.max(dv), am.min(av)));
            Ok(InterchangeRow {
                theta: th.clone(),
                fd_gradient: Point::from_vec_unchecked(fd),
                mean_gradient: Point::from_vec_unchecked(mg),
                discrepancy,
                allowed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InterchangeReport {
        rows,
        source: if enumerated {
            MomentSource::Enumerated
        } else {
            MomentSource::Estimated
        },
    })
}
