//! The deterministic recursion `e_n ≤ (1 − cγ_n)e_{n−1} + κγ_n^{k+1}` for
//! `n > N` and its explicit bound `e_n ≤ λγ_n^k`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::ABS_FLOOR;
use crate::schedule::Schedule;

/// Relative tolerance of [`verify_bound`].
pub const VERIFY_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionSpec {
    /// Burn-in index `N`.
    pub n_burn: u64,
    pub k: f64,
    pub kappa: f64,
    pub c: f64,
    pub schedule: Schedule,
    /// `e_0, …, e_N`.
    pub e_prefix: Vec<f64>,
}

impl RecursionSpec {
    fn validate(&self) -> Result<()> {
        if self.e_prefix.len() as u64 != self.n_burn + 1 {
            return Err(Error::InvalidArgument(format!(
                "e_prefix has {} entries, expected N + 1 = {}",
                self.e_prefix.len(),
                self.n_burn + 1
            )));
        }
        if self.e_prefix.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(Error::InvalidArgument("e_prefix must be finite and >= 0".into()));
        }
        if !(self.k > 0.0) || !(self.c > 0.0) || !(self.kappa >= 0.0) {
            return Err(Error::InvalidArgument("need k > 0, c > 0, kappa >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCertificate {
    pub lambda: f64,
    pub k: f64,
    /// Minimum of the Gronwall expression over `(N, horizon]`.
    pub c_inf: f64,
    pub c_inf_argmin: u64,
    pub horizon: u64,
    /// Indices `n ≤ N` with `1 − cγ_n < 0`. Tolerated, since the lemma only
    /// constrains the tail, but reported.
    pub prefix_step_violations: Vec<u64>,
    pub spec: RecursionSpec,
}

impl BoundCertificate {
    pub fn to_key_value(&self) -> String {
        let s = &self.spec;
        let prefix: Vec<String> = s.e_prefix.iter().map(|e| format!("{e:.16e}")).collect();
        let flagged: Vec<String> = self
            .prefix_step_violations
            .iter()
            .map(|n| n.to_string())
            .collect();
        format!(
            "lambda={:.16e}\nk={:.16e}\nC_inf={:.16e}\nC_inf_argmin={}\nhorizon={}\n\
             N={}\nkappa={:.16e}\nc={:.16e}\nschedule={}\ne_prefix={}\nprefix_step_violations={}\n",
            self.lambda,
            self.k,
            self.c_inf,
            self.c_inf_argmin,
            self.horizon,
            s.n_burn,
            s.kappa,
            s.c,
            s.schedule,
            prefix.join(";"),
            flagged.join(";"),
        )
    }
}

/// The worst-case sequence consistent with the hypothesis: `ê_l = e_l` for
/// `l ≤ N` and equality in the recursion afterwards. Returns `ê_0..=ê_{n_max}`.
pub fn recursion_envelope(spec: &RecursionSpec, n_max: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if n_max <= spec.n_burn {
        return Err(Error::InvalidArgument(format!(
            "n_max = {n_max} must exceed N = {}",
            spec.n_burn
        )));
    }
    spec.schedule.require_len(n_max)?;
    let mut out = Vec::with_capacity(n_max as usize + 1);
    out.extend_from_slice(&spec.e_prefix);
    let mut prev = *out.last().unwrap();
    for n in spec.n_burn + 1..=n_max {
        let g = spec.schedule.gamma(n)?;
        let factor = 1.0 - spec.c * g;
        if factor < 0.0 {
            return Err(Error::NegativeStepFactor { n });
        }
        prev = factor * prev + spec.kappa * g.powf(spec.k + 1.0);
        out.push(prev);
    }
    Ok(out)
}

/// `λ = max({e_l/γ_l^k : l ≤ N} ∪ {κ/C})` with
/// `C = min_{N < l ≤ horizon} [(γ_l^k − γ_{l−1}^k)/γ_l^{k+1} + c·γ_{l−1}^k/γ_l^k]`.
pub fn bound_constant(spec: &RecursionSpec, horizon: u64) -> Result<BoundCertificate> {
    spec.validate()?;
    if horizon <= spec.n_burn {
        return Err(Error::BurnInExceedsHorizon { horizon });
    }
    spec.schedule.require_len(horizon)?;
    let s = &spec.schedule;

    let tail: Vec<(u64, f64, f64)> = (spec.n_burn + 1..=horizon)
        .into_par_iter()
        .map(|l| {
            let g = s.gamma(l)?;
            let gp = s.gamma(l - 1)?;
            let d = s.rate_ratio(spec.k, spec.c, l)?;
            // magnitude of the terms that may cancel
            let scale = spec.c * (gp / g).powf(spec.k);
            Ok((l, d, scale))
        })
        .collect::<Result<_>>()?;

    if let Some(n) = (spec.n_burn + 1..=horizon).find(|&n| spec.c * s.gamma(n).unwrap() > 1.0) {
        return Err(Error::NegativeStepFactor { n });
    }

    let (argmin, c_inf, scale) = tail
        .iter()
        .fold((0, f64::INFINITY, 0.0), |acc, &(l, d, sc)| {
            if d < acc.1 || d.is_nan() {
                (l, d, sc)
            } else {
                acc
            }
        });
    if !(c_inf > 64.0 * f64::EPSILON * scale) {
        return Err(Error::CertificateUnavailable(format!(
            "Gronwall constant C = {c_inf:e} is not positive (at l = {argmin})"
        )));
    }

    let mut lambda = spec.kappa / c_inf;
    for (l, e) in spec.e_prefix.iter().enumerate() {
        lambda = lambda.max(e / s.gamma(l as u64)?.powf(spec.k));
    }
    let prefix_step_violations = (0..=spec.n_burn)
        .filter(|&n| spec.c * s.gamma(n).unwrap() > 1.0)
        .collect();

    Ok(BoundCertificate {
        lambda,
        k: spec.k,
        c_inf,
        c_inf_argmin: argmin,
        horizon,
        prefix_step_violations,
        spec: spec.clone(),
    })
}

/// Whether `ê_n ≤ λγ_n^k` for every entry of the envelope.
pub fn verify_bound(cert: &BoundCertificate, envelope: &[f64], schedule: &Schedule) -> Result<bool> {
    for (n, e) in envelope.iter().enumerate() {
        let bound = cert.lambda * schedule.gamma(n as u64)?.powf(cert.k);
        if !(*e <= bound * (1.0 + VERIFY_REL_TOL) + ABS_FLOOR) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Rows `(n, ê_n, λγ_n^k)`.
pub fn envelope_rows(
    cert: &BoundCertificate,
    envelope: &[f64],
    schedule: &Schedule,
) -> Result<Vec<(u64, f64, f64)>> {
    envelope
        .iter()
        .enumerate()
        .map(|(n, e)| {
            let n = n as u64;
            Ok((n, *e, cert.lambda * schedule.gamma(n)?.powf(cert.k)))
        })
        .collect()
}
