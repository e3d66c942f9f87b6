//! Euclidean vectors, norm-power inequalities and the Lyapunov family
//! `V_q(θ) = ‖θ − ϑ‖^q`.

use std::fmt;
use std::ops::Index;

use crate::error::{Error, Result};

/// Relative slack used by the inequality checkers.
pub const REL_TOL: f64 = 1e-12;
/// Absolute floor added to the slack.
pub const ABS_FLOOR: f64 = 1e-300;

/// `lhs ≤ rhs` up to rounding.
pub(crate) fn leq_with_slack(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + REL_TOL * lhs.abs().max(rhs.abs()) + ABS_FLOOR
}

/// A point of `R^d` with `d ≥ 1` and finite coordinates.
#[derive(Clone, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidPoint("dimension must be at least 1".into()));
        }
        if let Some(i) = coords.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidPoint(format!("coordinate {i} is not finite")));
        }
        Ok(Point(coords))
    }

    /// Builds a point without validation. Used on hot paths where the
    /// caller checks finiteness afterwards.
    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Point(vec![0.0; dim])
    }

    pub fn scalar(x: f64) -> Self {
        Point(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn add(&self, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Point {
        Point(self.0.iter().map(|a| a * s).collect())
    }

    /// `self + s·other`
    pub fn axpy(&self, s: f64, other: &Point) -> Point {
        debug_assert_eq!(self.dim(), other.dim());
        Point(self.0.iter().zip(&other.0).map(|(a, b)| a + s * b).collect())
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Point{:?}", self.0)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| format!("{x}")).collect();
        write!(f, "{}", parts.join(";"))
    }
}

/// Parses a `;`-separated list of reals, e.g. `3;-1`.
pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty vector".into()));
    }
    s.split(';')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse(format!("bad number '{t}'")))
        })
        .collect()
}

/// Splits `k1=v1,k2=v2` into pairs.
pub fn parse_key_values(s: &str) -> Result<Vec<(String, String)>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Parse(format!("expected key=value in '{kv}'")))
        })
        .collect()
}

/// Euclidean scalar product.
pub fn inner(u: &Point, v: &Point) -> Result<f64> {
    v.check_dim(u.dim())?;
    Ok(dot(u.coords(), v.coords()))
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Whether `‖v+w‖^p ≤ 2^{p−1}(‖v‖^p + ‖w‖^p)` holds for `p ≥ 1`.
pub fn check_power_convexity(v: &Point, w: &Point, p: f64) -> Result<bool> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    w.check_dim(v.dim())?;
    let lhs = v.add(w).norm().powf(p);
    let rhs = 2f64.powf(p - 1.0) * (v.norm().powf(p) + w.norm().powf(p));
    Ok(leq_with_slack(lhs, rhs))
}

/// Whether `|‖v‖^p − ‖w‖^p| ≤ 2^p‖v−w‖(min{‖v‖,‖w‖}^{p−1} + ‖v−w‖^{p−1})`
/// holds for integer `p ≥ 1`.
pub fn check_power_reverse_triangle(v: &Point, w: &Point, p: u32) -> Result<bool> {
    if p < 1 {
        return Err(Error::InvalidArgument("p must be >= 1".into()));
    }
    w.check_dim(v.dim())?;
    let (nv, nw) = (v.norm(), w.norm());
    let diff = v.sub(w).norm();
    let pi = p as i32;
    let lhs = (nv.powi(pi) - nw.powi(pi)).abs();
    let rhs = 2f64.powi(pi) * diff * (nv.min(nw).powi(pi - 1) + diff.powi(pi - 1));
    Ok(leq_with_slack(lhs, rhs))
}

/// `V_q(θ) = ‖θ − ϑ‖^q` around a fixed target.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSpec {
    target: Point,
    power: u32,
}

impl LyapunovSpec {
    pub fn new(target: Point, power: u32) -> Result<Self> {
        if power < 2 {
            return Err(Error::InvalidArgument(format!(
                "Lyapunov power must be >= 2, got {power}"
            )));
        }
        Ok(LyapunovSpec { target, power })
    }

    pub fn target(&self) -> &Point {
        &self.target
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    pub fn value(&self, theta: &Point) -> Result<f64> {
        theta.check_dim(self.target.dim())?;
        Ok(lyapunov_value_unchecked(
            theta.coords(),
            self.target.coords(),
            self.power,
        ))
    }

    /// Directional derivative `V_q'(θ)(v) = q‖θ−ϑ‖^{q−2}⟨θ−ϑ, v⟩`.
    /// At `θ = ϑ` the value is 0.
    pub fn gradient(&self, theta: &Point, v: &Point) -> Result<f64> {
        theta.check_dim(self.target.dim())?;
        v.check_dim(self.target.dim())?;
        let u = theta.sub(&self.target);
        let r2 = u.norm_sq();
        if r2 == 0.0 {
            return Ok(0.0);
        }
        let q = self.power as i32;
        let radial = if q == 2 { 1.0 } else { r2.sqrt().powi(q - 2) };
        Ok(self.power as f64 * radial * dot(u.coords(), v.coords()))
    }
}

pub(crate) fn lyapunov_value_unchecked(theta: &[f64], target: &[f64], q: u32) -> f64 {
    let r2: f64 = theta
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if q.is_multiple_of(2) {
        r2.powi((q / 2) as i32)
    } else {
        r2.sqrt().powi(q as i32)
    }
}

pub fn lyapunov_value(spec: &LyapunovSpec, theta: &Point) -> Result<f64> {
    spec.value(theta)
}

pub fn lyapunov_gradient(spec: &LyapunovSpec, theta: &Point, v: &Point) -> Result<f64> {
    spec.gradient(theta, v)
}
