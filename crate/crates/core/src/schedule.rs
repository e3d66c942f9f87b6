//! Learning-rate sequences `γ_n` and their admissibility checks.
//!
//! Polynomial schedules use `γ_n = α·n^{−ν}` for `n ≥ 1` and `γ_0 = α`.
//! `γ_0` never multiplies a step of the recursion (steps start at `n = 1`);
//! it only enters bound constants through ratios `e_0/γ_0^k`, so any
//! positive value is valid and `α` is the natural continuation.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default tolerance for "strictly positive" in the admissibility check.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default finite horizon standing in for `n → ∞`.
pub const DEFAULT_HORIZON: u64 = 1_000_000;
/// Smallest horizon accepted by the tail checks.
pub const MIN_HORIZON: u64 = 100;

/// Largest index probed when a closed-form schedule is followed past the
/// horizon.
const FAR_INDEX: f64 = 1e300;
const PROBE_POINTS: usize = 65;

#[derive(Clone, PartialEq)]
pub enum Schedule {
    Polynomial { alpha: f64, nu: f64 },
    Tabulated { values: Arc<Vec<f64>>, label: String },
}

impl Schedule {
    pub fn polynomial(alpha: f64, nu: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {alpha}")));
        }
        if !nu.is_finite() {
            return Err(Error::InvalidArgument("nu must be finite".into()));
        }
        Ok(Schedule::Polynomial { alpha, nu })
    }

    /// `values[n]` is `γ_n`, starting at `n = 0`.
    pub fn tabulated(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("tabulated schedule is empty".into()));
        }
        if let Some(i) = values.iter().position(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tabulated rate at index {i} is not a positive finite number"
            )));
        }
        Ok(Schedule::Tabulated {
            values: Arc::new(values),
            label: label.into(),
        })
    }

    /// Tabulates `f(0), …, f(last)`.
    pub fn tabulate(last: u64, label: impl Into<String>, f: impl Fn(u64) -> f64) -> Result<Self> {
        Schedule::tabulated((0..=last).map(f).collect(), label)
    }

    /// Parses `poly:alpha=<f>,nu=<f>` or `table:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("poly:") {
            let mut alpha = None;
            let mut nu = None;
            for kv in rest.split(',') {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("expected key=value in '{kv}'")))?;
                let x: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number '{v}'")))?;
                match k.trim() {
                    "alpha" => alpha = Some(x),
                    "nu" => nu = Some(x),
                    other => return Err(Error::Parse(format!("unknown schedule key '{other}'"))),
                }
            }
            let alpha = alpha.ok_or_else(|| Error::Parse("missing alpha".into()))?;
            let nu = nu.ok_or_else(|| Error::Parse("missing nu".into()))?;
            Schedule::polynomial(alpha, nu).map_err(|e| Error::Parse(e.to_string()))
        } else if let Some(path) = spec.strip_prefix("table:") {
            Schedule::from_table_file(Path::new(path), spec)
        } else {
            Err(Error::Parse(format!("unrecognized schedule '{spec}'")))
        }
    }

    fn from_table_file(path: &Path, label: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let x: f64 = line
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad number '{line}'", lineno + 1)))?;
            values.push(x);
        }
        Schedule::tabulated(values, label).map_err(|e| Error::Parse(e.to_string()))
    }

    /// `γ_n`.
    pub fn gamma(&self, n: u64) -> Result<f64> {
        match self {
            Schedule::Polynomial { alpha, nu } => Ok(poly_gamma(*alpha, *nu, n as f64)),
            Schedule::Tabulated { values, .. } => {
                values
                    .get(n as usize)
                    .copied()
                    .ok_or(Error::ScheduleOutOfRange {
                        index: n,
                        len: values.len(),
                    })
            }
        }
    }

    /// Number of rates available, `None` when unbounded.
    pub fn len(&self) -> Option<usize> {
        match self {
            Schedule::Polynomial { .. } => None,
            Schedule::Tabulated { values, .. } => Some(values.len()),
        }
    }

    pub fn nu(&self) -> Option<f64> {
        match self {
            Schedule::Polynomial { nu, .. } => Some(*nu),
            Schedule::Tabulated { .. } => None,
        }
    }

    pub(crate) fn require_len(&self, last_index: u64) -> Result<()> {
        if let Some(len) = self.len() {
            if last_index as usize >= len {
                return Err(Error::ScheduleOutOfRange {
                    index: last_index,
                    len,
                });
            }
        }
        Ok(())
    }

    /// `[(γ_l^k − γ_{l−1}^k)/γ_l^{k+1}] + c_eff·γ_{l−1}^k/γ_l^k` for `l ≥ 1`.
    ///
    /// Admissibility and the moment certificates use `c_eff = c/2`; the plain Gronwall
    /// recursion uses `c_eff = c`.
    pub fn rate_ratio(&self, k: f64, c_eff: f64, l: u64) -> Result<f64> {
        debug_assert!(l >= 1);
        match self {
            Schedule::Polynomial { alpha, nu } => Ok(poly_rate_ratio(*alpha, *nu, k, c_eff, l as f64)),
            Schedule::Tabulated { .. } => {
                let g = self.gamma(l)?;
                let gp = self.gamma(l - 1)?;
                Ok(direct_rate_ratio(g, gp, k, c_eff))
            }
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Polynomial { alpha, nu } => write!(f, "poly:alpha={alpha},nu={nu}"),
            Schedule::Tabulated { label, .. } => write!(f, "{label}"),
        }
    }
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Polynomial { alpha, nu } => {
                write!(f, "Polynomial {{ alpha: {alpha}, nu: {nu} }}")
            }
            Schedule::Tabulated { values, label } => {
                write!(f, "Tabulated {{ label: {label:?}, len: {} }}", values.len())
            }
        }
    }
}

pub fn gamma(s: &Schedule, n: u64) -> Result<f64> {
    s.gamma(n)
}

fn poly_gamma(alpha: f64, nu: f64, n: f64) -> f64 {
    if n == 0.0 {
        alpha
    } else {
        alpha * n.powf(-nu)
    }
}

pub(crate) fn direct_rate_ratio(g: f64, g_prev: f64, k: f64, c_eff: f64) -> f64 {
    let gk = g.powf(k);
    let gpk = g_prev.powf(k);
    (gk - gpk) / (gk * g) + c_eff * gpk / gk
}

/// Closed form for `γ_l = α l^{−ν}` without the cancellation in
/// `γ_l^k − γ_{l−1}^k`. With `r = ln(l/(l−1))`:
/// first term `= −(1/α)·l^ν·expm1(kνr)`, second `= c_eff·exp(kνr)`.
fn poly_rate_ratio(alpha: f64, nu: f64, k: f64, c_eff: f64, l: f64) -> f64 {
    if l <= 1.0 {
        // γ_0 = γ_1 = α
        return c_eff;
    }
    let r = -(-1.0 / l).ln_1p();
    let e = k * nu * r;
    -(l.powf(nu) / alpha) * e.exp_m1() + c_eff * e.exp()
}

/// Tail summary for one exponent `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailMinimum {
    pub k: u32,
    /// Minimum of `D_k(l)` over the deciding tail window.
    pub min: f64,
    /// Index where the minimum sits.
    pub argmin: f64,
    /// Right end of the deciding window. Exceeds the horizon when a
    /// closed-form schedule was followed further out.
    pub window_end: f64,
    pub trend: Trend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Rising,
    Falling,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Admissible,
    Inadmissible,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Admissible => "admissible",
            Verdict::Inadmissible => "inadmissible",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub c: f64,
    pub k_max: u32,
    pub horizon: u64,
    pub tol: f64,
    pub limsup_ok: bool,
    pub per_k_min_tail: Vec<TailMinimum>,
    pub verdict: Verdict,
}

impl AdmissibilityReport {
    pub fn to_key_value(&self, schedule: &Schedule) -> String {
        let mut out = String::new();
        out.push_str(&format!("schedule={schedule}\n"));
        out.push_str(&format!("c={:.17e}\n", self.c));
        out.push_str(&format!("k_max={}\n", self.k_max));
        out.push_str(&format!("horizon={}\n", self.horizon));
        out.push_str(&format!("tol={:.17e}\n", self.tol));
        out.push_str(&format!("limsup_ok={}\n", self.limsup_ok));
        for t in &self.per_k_min_tail {
            out.push_str(&format!(
                "tail_min_k{}={:.17e}\ntail_argmin_k{}={:.17e}\ntail_window_end_k{}={:.17e}\n",
                t.k, t.min, t.k, t.argmin, t.k, t.window_end
            ));
        }
        out.push_str(&format!("verdict={}\n", self.verdict));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TailOutcome {
    Positive,
    Negative,
    Marginal,
}

/// Numerical check of `limsup γ_l = 0 < min_k liminf D_k(l)` with
/// `D_k(l) = (γ_l^k − γ_{l−1}^k)/γ_l^{k+1} + c·γ_{l−1}^k/(2γ_l^k)`.
///
/// The liminf is approximated by the minimum of `D_k` over the tail half
/// `[H/2, H]` of the horizon. Polynomial schedules are eventually monotone
/// in `l`; when the window does not settle the sign yet (minimum positive
/// but still falling, or negative but still rising) the closed form is
/// probed on windows `[L/2, L]` with `L = 10H, 100H, …` until it does.
pub fn check_admissibility(
    s: &Schedule,
    c: f64,
    k_max: u32,
    horizon: u64,
    tol: f64,
) -> Result<AdmissibilityReport> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be > 0, got {c}")));
    }
    if k_max < 1 {
        return Err(Error::InvalidArgument("k_max must be >= 1".into()));
    }
    if horizon < MIN_HORIZON {
        return Err(Error::HorizonTooSmall {
            horizon,
            minimum: MIN_HORIZON,
        });
    }
    s.require_len(horizon)?;

    let limsup_ok = limsup_vanishes(s, horizon, tol)?;
    let mut per_k = Vec::with_capacity(k_max as usize);
    let mut outcomes = Vec::with_capacity(k_max as usize);
    for k in 1..=k_max {
        let (tail, outcome) = tail_for_k(s, k, c / 2.0, horizon, tol)?;
        per_k.push(tail);
        outcomes.push(outcome);
    }

    let verdict = if !limsup_ok || outcomes.contains(&TailOutcome::Negative) {
        Verdict::Inadmissible
    } else if outcomes.iter().all(|o| *o == TailOutcome::Positive) {
        Verdict::Admissible
    } else {
        Verdict::Inconclusive
    };

    Ok(AdmissibilityReport {
        c,
        k_max,
        horizon,
        tol,
        limsup_ok,
        per_k_min_tail: per_k,
        verdict,
    })
}

/// Polynomial: γ strictly decreasing on the tail and below `tol` at the far
/// probe index. Tabulated: the running maximum of the last quarter of the
/// horizon lies strictly below that of the preceding quarter.
fn limsup_vanishes(s: &Schedule, horizon: u64, tol: f64) -> Result<bool> {
    match s {
        Schedule::Polynomial { alpha, nu } => {
            let half = poly_gamma(*alpha, *nu, (horizon / 2) as f64);
            let end = poly_gamma(*alpha, *nu, horizon as f64);
            Ok(end < half && poly_gamma(*alpha, *nu, FAR_INDEX) < tol)
        }
        Schedule::Tabulated { values, .. } => {
            let h = horizon as usize;
            let q2 = h / 2;
            let q3 = h / 2 + h / 4;
            let max_of = |a: usize, b: usize| values[a..=b].iter().copied().fold(f64::MIN, f64::max);
            Ok(max_of(q3 + 1, h) < max_of(q2, q3))
        }
    }
}

fn tail_for_k(
    s: &Schedule,
    k: u32,
    c_eff: f64,
    horizon: u64,
    tol: f64,
) -> Result<(TailMinimum, TailOutcome)> {
    let kf = k as f64;
    let lo = (horizon / 2).max(1);
    let values: Vec<f64> = (lo..=horizon)
        .into_par_iter()
        .map(|l| s.rate_ratio(kf, c_eff, l))
        .collect::<Result<_>>()?;
    let indices: Vec<f64> = (lo..=horizon).map(|l| l as f64).collect();
    let mut tail = summarize(k, &indices, &values);

    let outcome = match s {
        Schedule::Tabulated { .. } => classify_finite(&tail, tol),
        Schedule::Polynomial { alpha, nu } => {
            let mut end = horizon as f64;
            loop {
                if let Some(o) = classify_settled(&tail, tol) {
                    break o;
                }
                end *= 10.0;
                if end > FAR_INDEX {
                    break classify_finite(&tail, tol);
                }
                let (idx, vals) = probe_window(end, |l| poly_rate_ratio(*alpha, *nu, kf, c_eff, l));
                tail = summarize(k, &idx, &vals);
            }
        }
    };
    Ok((tail, outcome))
}

fn probe_window(end: f64, f: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let start = end / 2.0;
    let ratio = (end / start).powf(1.0 / (PROBE_POINTS - 1) as f64);
    let idx: Vec<f64> = (0..PROBE_POINTS)
        .map(|i| (start * ratio.powi(i as i32)).round())
        .collect();
    let vals = idx.iter().map(|&l| f(l)).collect();
    (idx, vals)
}

fn summarize(k: u32, indices: &[f64], values: &[f64]) -> TailMinimum {
    let mut min = f64::INFINITY;
    let mut argmin_pos = 0;
    for (i, &v) in values.iter().enumerate() {
        // NaN counts as a violation
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        if v < min {
            min = v;
            argmin_pos = i;
        }
    }
    let trend = if argmin_pos == 0 && values.last() > values.first() {
        Trend::Rising
    } else if argmin_pos + 1 == values.len() {
        Trend::Falling
    } else {
        Trend::Mixed
    };
    TailMinimum {
        k,
        min,
        argmin: indices[argmin_pos],
        window_end: *indices.last().unwrap(),
        trend,
    }
}

/// Sign is settled when a positive minimum is approached from above by a
/// rising sequence, or a negative minimum is still falling.
fn classify_settled(t: &TailMinimum, tol: f64) -> Option<TailOutcome> {
    match t.trend {
        Trend::Rising if t.min > tol => Some(TailOutcome::Positive),
        Trend::Falling if t.min < 0.0 => Some(TailOutcome::Negative),
        _ => None,
    }
}

fn classify_finite(t: &TailMinimum, tol: f64) -> TailOutcome {
    if t.min > tol {
        TailOutcome::Positive
    } else if t.min < 0.0 {
        TailOutcome::Negative
    } else {
        TailOutcome::Marginal
    }
}

/// Numerical form of: `limsup_n |n^{−δ} − (n−1)^{−δ}| / n^{−β} = 0` when
/// `β < δ + 1`.
///
/// Returns true iff at some tail index `L` (starting at the horizon and
/// moving out by decades) the ratio is below `1e−3` and smaller than at
/// `L/10`.
pub fn decay_ratio_check(beta: f64, delta: f64, horizon: u64) -> Result<bool> {
    if !(beta > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidArgument("beta and delta must be > 0".into()));
    }
    if horizon < MIN_HORIZON {
        return Err(Error::HorizonTooSmall {
            horizon,
            minimum: MIN_HORIZON,
        });
    }
    let ratio = |n: f64| {
        let r = -(-1.0 / n).ln_1p();
        n.powf(beta - delta) * (delta * r).exp_m1()
    };
    let mut end = horizon as f64;
    while end <= FAR_INDEX {
        let now = ratio(end);
        let before = ratio(end / 10.0);
        if now < 1e-3 && now < before {
            return Ok(true);
        }
        if now >= before && now >= 1e-3 {
            // not decreasing and already large: cannot recover for this family
            return Ok(false);
        }
        end *= 10.0;
    }
    Ok(false)
}
