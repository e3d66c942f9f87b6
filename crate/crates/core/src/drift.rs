//! Drift fields `g: R^d → R^d`, sampled checks of the contraction condition
//! and constant transport between the equivalent stability properties.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{dot, parse_key_values, parse_vector, Point};
use crate::rng::seeded;

/// Default tolerance on normalized violations.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Points in the default `r` grid.
pub const R_GRID_POINTS: usize = 33;

type Evaluator = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// The deterministic drift `g` with its zero `ϑ`.
#[derive(Clone)]
pub struct DriftField {
    target: Point,
    eval: Arc<Evaluator>,
    label: String,
}

impl DriftField {
    /// `f(θ, out)` writes `g(θ)` into `out`. It must be pure.
    pub fn new<F>(target: Point, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        DriftField {
            target,
            eval: Arc::new(f),
            label: label.into(),
        }
    }

    /// `g(θ) = −c(θ − ϑ)`.
    pub fn scalar(c: f64, target: Point) -> Self {
        let t = target.coords().to_vec();
        DriftField::new(target, format!("scalar:c={c}"), move |th, out| {
            for ((o, x), s) in out.iter_mut().zip(th).zip(&t) {
                *o = -c * (x - s);
            }
        })
    }

    /// `g(θ) = −A(θ − ϑ)`.
    pub fn linear(a: DMatrix<f64>, target: Point) -> Result<Self> {
        let d = target.dim();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: a.nrows(),
            });
        }
        let t = target.coords().to_vec();
        let label = format!(
            "linear:A={},theta_star={}",
            join(a.transpose().as_slice()),
            target
        );
        Ok(DriftField::new(target, label, move |th, out| {
            for (i, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += a[(i, j)] * (th[j] - t[j]);
                }
                *o = -acc;
            }
        }))
    }

    /// Parses `linear:A=<row-major>,theta_star=<vector>` or
    /// `scalar:c=<f>[,theta_star=<vector>]` (vectors `;`-separated).
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("linear:") {
            let mut a = None;
            let mut t = None;
            for (k, v) in parse_key_values(rest)? {
                match k.as_str() {
                    "A" => a = Some(parse_vector(&v)?),
                    "theta_star" => t = Some(parse_vector(&v)?),
                    _ => return Err(Error::Parse(format!("unknown drift key '{k}'"))),
                }
            }
            let a = a.ok_or_else(|| Error::Parse("missing A".into()))?;
            let t = t.ok_or_else(|| Error::Parse("missing theta_star".into()))?;
            let d = t.len();
            if a.len() != d * d {
                return Err(Error::Parse(format!(
                    "A has {} entries, expected {}",
                    a.len(),
                    d * d
                )));
            }
            let m = DMatrix::from_row_slice(d, d, &a);
            DriftField::linear(m, Point::new(t)?)
        } else if let Some(rest) = spec.strip_prefix("scalar:") {
            let mut c = None;
            let mut t = vec![0.0];
            for (k, v) in parse_key_values(rest)? {
                match k.as_str() {
                    "c" => {
                        c = Some(
                            v.parse::<f64>()
                                .map_err(|_| Error::Parse(format!("bad number '{v}'")))?,
                        )
                    }
                    "theta_star" => t = parse_vector(&v)?,
                    _ => return Err(Error::Parse(format!("unknown drift key '{k}'"))),
                }
            }
            let c = c.ok_or_else(|| Error::Parse("missing c".into()))?;
            if !(c.is_finite()) {
                return Err(Error::Parse("c must be finite".into()));
            }
            Ok(DriftField::scalar(c, Point::new(t)?))
        } else {
            Err(Error::Parse(format!("unrecognized drift '{spec}'")))
        }
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn target(&self) -> &Point {
        &self.target
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Writes `g(θ)` into `out` without checks.
    #[inline]
    pub fn eval_into(&self, theta: &[f64], out: &mut [f64]) {
        (self.eval)(theta, out)
    }

    pub fn eval(&self, theta: &Point) -> Result<Point> {
        theta.check_dim(self.dim())?;
        let mut out = vec![0.0; self.dim()];
        self.eval_into(theta.coords(), &mut out);
        Ok(Point::from_vec_unchecked(out))
    }
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DriftField({})", self.label)
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

/// One of the stability properties with its constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Property {
    /// `⟨θ−ϑ, g⟩ ≤ −c·max{‖θ−ϑ‖², ‖g‖²}`
    I { c: f64 },
    /// `‖θ + ρg − ϑ‖² ≤ (1 − cρ)‖θ−ϑ‖²`
    II { c: f64, rho: f64 },
    /// `‖θ + rg − ϑ‖² ≤ (1 − cr)‖θ−ϑ‖²` for all `r ∈ [0, ρ]`
    III { c: f64, rho: f64 },
    /// `sup_θ [2⟨θ−ϑ, g⟩ + r‖g‖²]/‖θ−ϑ‖² ≤ −C`
    V { big_c: f64, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropertyId {
    I,
    II,
    III,
    V,
}

impl Property {
    pub fn id(&self) -> PropertyId {
        match self {
            Property::I { .. } => PropertyId::I,
            Property::II { .. } => PropertyId::II,
            Property::III { .. } => PropertyId::III,
            Property::V { .. } => PropertyId::V,
        }
    }

    fn constants_positive(&self) -> bool {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        match *self {
            Property::I { c } => pos(c),
            Property::II { c, rho } | Property::III { c, rho } => pos(c) && pos(rho),
            Property::V { big_c, r } => pos(big_c) && pos(r),
        }
    }
}

fn id_name(p: PropertyId) -> &'static str {
    match p {
        PropertyId::I => "i",
        PropertyId::II => "ii",
        PropertyId::III => "iii",
        PropertyId::V => "v",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCertificate {
    pub c: f64,
    pub mode: Property,
    pub samples_checked: usize,
    /// Largest normalized violation; `≤ tol` for a valid certificate.
    pub max_violation: f64,
    pub tol: f64,
}

impl ContractionCertificate {
    pub fn is_valid(&self) -> bool {
        self.max_violation <= self.tol
    }
}

/// The default sample set: 10 radii log-spaced in `[1e−3, 1e3]` times
/// `directions` uniform directions around `ϑ`, plus `ϑ` itself.
pub fn standard_samples(target: &Point, directions: usize, seed: u64) -> Vec<Point> {
    let radii: Vec<f64> = (0..10).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 9.0)).collect();
    let dirs = unit_directions(target.dim(), directions, seed);
    let mut out = Vec::with_capacity(radii.len() * dirs.len() + 1);
    for r in &radii {
        for u in &dirs {
            out.push(target.axpy(*r, u));
        }
    }
    out.push(target.clone());
    out
}

/// Uniform directions on the unit sphere (Gaussian normalization).
pub fn unit_directions(dim: usize, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if dim == 1 {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            out.push(Point::scalar(s));
            continue;
        }
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-12 {
            out.push(Point::from_vec_unchecked(v.iter().map(|x| x / n).collect()));
        }
    }
    out
}

/// Equispaced grid of `points` values in `[0, rho]`.
pub fn r_grid(rho: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![rho];
    }
    (0..points)
        .map(|i| rho * i as f64 / (points - 1) as f64)
        .collect()
}

/// Per-sample quantities shared by the checks.
struct Eval {
    u_sq: f64,
    g_sq: f64,
    ug: f64,
}

fn evaluate(g: &DriftField, samples: &[Point]) -> Result<Vec<Eval>> {
    let d = g.dim();
    for s in samples {
        s.check_dim(d)?;
    }
    let t = g.target().coords();
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut out = vec![0.0; d];
            g.eval_into(s.coords(), &mut out);
            if out.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteDrift { sample: i });
            }
            let u: Vec<f64> = s.coords().iter().zip(t).map(|(a, b)| a - b).collect();
            Ok(Eval {
                u_sq: dot(&u, &u),
                g_sq: dot(&out, &out),
                ug: dot(&u, &out),
            })
        })
        .collect()
}

/// Divides by `‖θ−ϑ‖²` when it is positive, otherwise keeps the absolute value.
fn normalize(v: f64, u_sq: f64) -> f64 {
    if u_sq > 0.0 {
        v / u_sq
    } else {
        v
    }
}

fn max_of(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::NEG_INFINITY, f64::max)
}

fn contraction_violation(e: &Eval, c: f64) -> f64 {
    normalize(e.ug + c * e.u_sq.max(e.g_sq), e.u_sq)
}

/// `‖u + rg‖² − (1 − cr)‖u‖²`, normalized.
fn step_violation(e: &Eval, c: f64, r: f64) -> f64 {
    let lhs = e.u_sq + 2.0 * r * e.ug + r * r * e.g_sq;
    normalize(lhs - (1.0 - c * r) * e.u_sq, e.u_sq)
}

/// Sampled check of `⟨θ−ϑ, g(θ)⟩ ≤ −c·max{‖θ−ϑ‖², ‖g(θ)‖²}`.
pub fn check_contraction(
    g: &DriftField,
    c: f64,
    samples: &[Point],
    tol: f64,
) -> Result<ContractionCertificate> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be > 0, got {c}")));
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let evals = evaluate(g, samples)?;
    let max_violation = max_of(evals.iter().map(|e| contraction_violation(e, c)));
    Ok(ContractionCertificate {
        c,
        mode: Property::I { c },
        samples_checked: samples.len(),
        max_violation,
        tol,
    })
}

/// Sampled check of a property with given constants.
pub fn check_property(
    g: &DriftField,
    prop: Property,
    samples: &[Point],
    tol: f64,
) -> Result<ContractionCertificate> {
    let evals = evaluate(g, samples)?;
    let max_violation = match prop {
        Property::I { c } => max_of(evals.iter().map(|e| contraction_violation(e, c))),
        Property::II { c, rho } => max_of(evals.iter().map(|e| step_violation(e, c, rho))),
        Property::III { c, rho } => {
            let grid = r_grid(rho, R_GRID_POINTS);
            max_of(
                evals
                    .iter()
                    .flat_map(|e| grid.iter().map(move |&r| step_violation(e, c, r))),
            )
        }
        Property::V { big_c, r } => {
            let at_target = evals
                .iter()
                .filter(|e| e.u_sq == 0.0)
                .map(|e| e.g_sq.sqrt());
            let ratio = evals
                .iter()
                .filter(|e| e.u_sq > 0.0)
                .map(|e| (2.0 * e.ug + r * e.g_sq) / e.u_sq + big_c);
            max_of(at_target.chain(ratio))
        }
    };
    let c = match prop {
        Property::I { c } | Property::II { c, .. } | Property::III { c, .. } => c,
        Property::V { big_c, .. } => big_c,
    };
    Ok(ContractionCertificate {
        c,
        mode: prop,
        samples_checked: samples.len(),
        max_violation,
        tol,
    })
}

/// Best constants for property (v) found on a finite `r` grid: the `(C, r)`
/// maximizing `C = −sup_θ [2⟨θ−ϑ,g⟩ + r‖g‖²]/‖θ−ϑ‖²`. `None` when no grid
/// value gives `C > 0`.
pub fn best_property_v(g: &DriftField, samples: &[Point], rs: &[f64]) -> Result<Option<Property>> {
    let evals = evaluate(g, samples)?;
    let mut best: Option<(f64, f64)> = None;
    for &r in rs.iter().filter(|r| **r > 0.0) {
        let sup = max_of(
            evals
                .iter()
                .filter(|e| e.u_sq > 0.0)
                .map(|e| (2.0 * e.ug + r * e.g_sq) / e.u_sq),
        );
        let big_c = -sup;
        if big_c > 0.0 && best.is_none_or(|(b, _)| big_c > b) {
            best = Some((big_c, r));
        }
    }
    Ok(best.map(|(big_c, r)| Property::V { big_c, r }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedBoundsReport {
    pub c1: f64,
    pub c2: f64,
    pub samples_checked: usize,
    /// `‖g(ϑ)‖ = 0`
    pub zero_at_target: Option<bool>,
    /// `c1·c2 ≤ 1`
    pub product_bound: bool,
    /// `c1‖θ−ϑ‖ ≤ ‖g(θ)‖ ≤ ‖θ−ϑ‖/c2`
    pub norm_sandwich: Option<bool>,
    /// `‖θ + rg − ϑ‖² ≤ (1 − c1 r(2 − r/c2))‖θ−ϑ‖²` on `[0, 2c2]`
    pub step_bound_wide: Option<bool>,
    /// `‖θ + rg − ϑ‖² ≤ (1 − c1 r)‖θ−ϑ‖²` on `[0, c2]`
    pub step_bound_narrow: Option<bool>,
}

impl DerivedBoundsReport {
    pub fn all_hold(&self) -> bool {
        self.product_bound
            && [
                self.zero_at_target,
                self.norm_sandwich,
                self.step_bound_wide,
                self.step_bound_narrow,
            ]
            .iter()
            .all(|x| *x == Some(true))
    }
}

/// Consequences of the two-constant hypothesis
/// `⟨θ−ϑ, g⟩ ≤ −max{c1‖θ−ϑ‖², c2‖g‖²}`.
///
/// Claimed constants with `c1·c2 > 1` cannot satisfy the hypothesis for any
/// nonzero drift, so they are rejected before sampling and the remaining
/// items are left unevaluated. Otherwise the hypothesis is checked on every
/// sample and a failing sample is an error.
pub fn derived_bounds_check(
    g: &DriftField,
    c1: f64,
    c2: f64,
    samples: &[Point],
    tol: f64,
) -> Result<DerivedBoundsReport> {
    if !(c1 > 0.0) || !(c2 > 0.0) {
        return Err(Error::InvalidArgument("c1 and c2 must be > 0".into()));
    }
    let mut report = DerivedBoundsReport {
        c1,
        c2,
        samples_checked: samples.len(),
        zero_at_target: None,
        product_bound: c1 * c2 <= 1.0 + tol,
        norm_sandwich: None,
        step_bound_wide: None,
        step_bound_narrow: None,
    };
    if !report.product_bound {
        return Ok(report);
    }

    let evals = evaluate(g, samples)?;
    for (i, e) in evals.iter().enumerate() {
        let v = normalize(e.ug + (c1 * e.u_sq).max(c2 * e.g_sq), e.u_sq);
        if v > tol {
            return Err(Error::HypothesisFailed {
                sample: i,
                violation: v,
            });
        }
    }

    let g_at_target = g.eval(g.target())?;
    report.zero_at_target = Some(g_at_target.norm() <= tol);

    report.norm_sandwich = Some(evals.iter().filter(|e| e.u_sq > 0.0).all(|e| {
        let (u, gn) = (e.u_sq.sqrt(), e.g_sq.sqrt());
        (c1 * u - gn) / u <= tol && (gn - u / c2) / u <= tol
    }));

    let wide = r_grid(2.0 * c2, R_GRID_POINTS);
    report.step_bound_wide = Some(evals.iter().all(|e| {
        wide.iter().all(|&r| {
            let lhs = e.u_sq + 2.0 * r * e.ug + r * r * e.g_sq;
            normalize(lhs - (1.0 - c1 * r * (2.0 - r / c2)) * e.u_sq, e.u_sq) <= tol
        })
    }));

    let narrow = r_grid(c2, R_GRID_POINTS);
    report.step_bound_narrow = Some(
        evals
            .iter()
            .all(|e| narrow.iter().all(|&r| step_violation(e, c1, r) <= tol)),
    );
    Ok(report)
}

/// Whether the one-step contraction at every `r` in `rs ⊆ [0, ρ]` holds on
/// all samples, given that it holds at `ρ`.
pub fn euler_monotonicity_check(
    g: &DriftField,
    c: f64,
    rho: f64,
    samples: &[Point],
    rs: &[f64],
    tol: f64,
) -> Result<bool> {
    if !(c > 0.0) || !(rho > 0.0) {
        return Err(Error::InvalidArgument("c and rho must be > 0".into()));
    }
    if let Some(r) = rs.iter().find(|r| !(**r >= 0.0 && **r <= rho)) {
        return Err(Error::InvalidArgument(format!("r = {r} outside [0, rho]")));
    }
    let evals = evaluate(g, samples)?;
    if let Some((i, v)) = evals
        .iter()
        .map(|e| step_violation(e, c, rho))
        .enumerate()
        .find(|(_, v)| *v > tol)
    {
        return Err(Error::HypothesisFailed {
            sample: i,
            violation: v,
        });
    }
    Ok(evals
        .iter()
        .all(|e| rs.iter().all(|&r| step_violation(e, c, r) <= tol)))
}

/// Moves constants along the proof chain `(v) → (i) → (ii) → (iii)`.
/// Transports composed from these steps are allowed; other directions are
/// not implemented.
pub fn transport_constants(from: Property, to: PropertyId) -> Result<Property> {
    if !from.constants_positive() {
        return Err(Error::InvalidArgument(
            "property constants must be positive".into(),
        ));
    }
    let mut cur = from;
    loop {
        if cur.id() == to {
            return Ok(cur);
        }
        cur = match cur {
            Property::V { big_c, r } => Property::I {
                c: big_c.min(r) / 2.0,
            },
            Property::I { c } => Property::II { c, rho: c },
            Property::II { c, rho } => Property::III { c, rho },
            Property::III { .. } => {
                return Err(Error::UnsupportedTransport {
                    from: id_name(from.id()),
                    to: id_name(to),
                })
            }
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_drift(scale: f64, target: f64) -> DriftField {
        DriftField::scalar(scale, Point::scalar(target))
    }

    fn line_samples(target: f64) -> Vec<Point> {
        [-100.0, -1.0, -0.01, 0.0, 0.5, 3.0, 1e3]
            .iter()
            .map(|x| Point::scalar(target + x))
            .collect()
    }

    #[test]
    fn contraction_examples() {
        let g = identity_drift(1.0, 0.3);
        let cert = check_contraction(&g, 1.0, &line_samples(0.3), DEFAULT_TOL).unwrap();
        assert!(cert.is_valid());
        assert!(cert.max_violation.abs() < 1e-15);

        let g2 = identity_drift(2.0, 0.0);
        assert!(check_contraction(&g2, 0.5, &line_samples(0.0), DEFAULT_TOL)
            .unwrap()
            .is_valid());
        let bad = check_contraction(&g2, 0.6, &line_samples(0.0), DEFAULT_TOL).unwrap();
        assert!(!bad.is_valid());
        // −2 + 0.6·4 = 0.4 per unit ‖u‖²
        assert!((bad.max_violation - 0.4).abs() < 1e-12);

        let expanding = identity_drift(-1.0, 0.0);
        let cert = check_contraction(&expanding, 0.01, &[Point::scalar(1.0)], DEFAULT_TOL).unwrap();
        assert!(!cert.is_valid());
    }

    #[test]
    fn contraction_errors() {
        let g = identity_drift(1.0, 0.0);
        assert!(matches!(
            check_contraction(&g, 1.0, &[Point::zeros(2)], DEFAULT_TOL),
            Err(Error::DimensionMismatch { .. })
        ));
        let nan = DriftField::new(Point::scalar(0.0), "nan", |_, out| out[0] = f64::NAN);
        assert_eq!(
            check_contraction(&nan, 1.0, &[Point::scalar(1.0)], DEFAULT_TOL).unwrap_err(),
            Error::NonFiniteDrift { sample: 0 }
        );
    }

    #[test]
    fn derived_bounds_examples() {
        let g = identity_drift(1.0, 0.0);
        let rep = derived_bounds_check(&g, 1.0, 1.0, &line_samples(0.0), DEFAULT_TOL).unwrap();
        assert!(rep.all_hold(), "{rep:?}");

        let rep = derived_bounds_check(&g, 2.0, 1.0, &line_samples(0.0), DEFAULT_TOL).unwrap();
        assert!(!rep.product_bound);
        assert!(!rep.all_hold());

        // c1·c2 ≤ 1 but the hypothesis fails at c1 = 1.5
        let err = derived_bounds_check(&g, 1.5, 0.5, &line_samples(0.0), DEFAULT_TOL).unwrap_err();
        assert!(matches!(err, Error::HypothesisFailed { .. }));
    }

    #[test]
    fn euler_examples() {
        let g = identity_drift(1.0, 0.0);
        assert!(euler_monotonicity_check(&g, 1.0, 1.0, &line_samples(0.0), &[0.0, 0.25, 0.5, 1.0], DEFAULT_TOL).unwrap());
        let g2 = identity_drift(2.0, 0.0);
        let grid = r_grid(0.5, R_GRID_POINTS);
        assert!(euler_monotonicity_check(&g2, 2.0, 0.5, &line_samples(0.0), &grid, DEFAULT_TOL).unwrap());
        assert!(euler_monotonicity_check(&g2, 2.0, 0.5, &line_samples(0.0), &[0.0], DEFAULT_TOL).unwrap());
    }

    #[test]
    fn transport_examples() {
        assert_eq!(
            transport_constants(Property::I { c: 1.0 }, PropertyId::II).unwrap(),
            Property::II { c: 1.0, rho: 1.0 }
        );
        assert_eq!(
            transport_constants(Property::V { big_c: 0.5, r: 2.0 }, PropertyId::I).unwrap(),
            Property::I { c: 0.25 }
        );
        assert_eq!(
            transport_constants(Property::II { c: 0.3, rho: 0.7 }, PropertyId::III).unwrap(),
            Property::III { c: 0.3, rho: 0.7 }
        );
        assert!(matches!(
            transport_constants(Property::III { c: 0.3, rho: 0.7 }, PropertyId::I),
            Err(Error::UnsupportedTransport { from: "iii", to: "i" })
        ));
        assert!(transport_constants(Property::I { c: -1.0 }, PropertyId::II).is_err());
    }

    #[test]
    fn parse_drifts() {
        let g = DriftField::parse("linear:A=2;0;0;8,theta_star=1;-1").unwrap();
        assert_eq!(g.dim(), 2);
        let v = g.eval(&Point::new(vec![2.0, 0.0]).unwrap()).unwrap();
        assert_eq!(v.coords(), &[-2.0, -8.0]);
        let s = DriftField::parse("scalar:c=3").unwrap();
        assert_eq!(s.eval(&Point::scalar(1.0)).unwrap().coords(), &[-3.0]);
        assert!(DriftField::parse("linear:A=1;2;3,theta_star=0;0").is_err());
        assert!(DriftField::parse("quadratic:c=1").is_err());
        assert!(DriftField::parse("scalar:c=abc").is_err());
    }

    #[test]
    fn standard_sample_set_shape() {
        let t = Point::new(vec![1.0, 2.0]).unwrap();
        let s = standard_samples(&t, 1000, 1);
        assert_eq!(s.len(), 10_001);
        assert_eq!(s.last().unwrap(), &t);
        let r = s[0].sub(&t).norm();
        assert!((r - 1e-3).abs() < 1e-15);
        let r = s[9000].sub(&t).norm();
        assert!((r - 1e3).abs() < 1e-9);
    }

    #[test]
    fn best_v_on_identity() {
        // 2⟨u,−u⟩ + r‖u‖² = (r − 2)‖u‖²; best C on grid (0, 2] is at the smallest r
        let g = identity_drift(1.0, 0.0);
        let best = best_property_v(&g, &line_samples(0.0), &[0.5, 1.0, 1.5]).unwrap().unwrap();
        assert_eq!(best, Property::V { big_c: 1.5, r: 0.5 });
        let cert = check_property(&g, best, &line_samples(0.0), DEFAULT_TOL).unwrap();
        assert!(cert.is_valid());
    }
}
