//! Tail risk of the distance distribution: empirical VaR and CVaR with
//! distribution-free confidence bounds.
//!
//! VaR bounds come from the DKW inequality and assume a continuous CDF for `Z`, which
//! cannot be checked from samples. CVaR bounds assume `Z` is supported on `[a, b]`;
//! clip the scores first (see [`crate::metrics::clip`]).

use serde::{Deserialize, Serialize};

use crate::conformal::{check_probability, ScoreSet};
use crate::quantile::{ceil_index, order_statistic};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskMeasure {
    Var,
    Cvar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub measure: RiskMeasure,
    pub beta: f64,
    pub gamma: f64,
    /// `[a, b]` support of the (clipped) scores; required for CVaR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<(f64, f64)>,
}

impl RiskSpec {
    pub fn new(measure: RiskMeasure, beta: f64, gamma: f64, support: Option<(f64, f64)>) -> Result<Self> {
        let spec = RiskSpec { measure, beta, gamma, support };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("beta", self.beta)?;
        check_probability("gamma", self.gamma)?;
        if let Some((a, b)) = self.support {
            check_support(a, b)?;
        }
        if self.measure == RiskMeasure::Cvar && self.support.is_none() {
            return Err(Error::invalid("CVaR bounds need a support interval [a, b]"));
        }
        Ok(())
    }
}

fn check_support(a: f64, b: f64) -> Result<()> {
    if a.is_finite() && b.is_finite() && a < b {
        Ok(())
    } else {
        Err(Error::invalid(format!("support must satisfy a < b, got [{a}, {b}]")))
    }
}

/// Point estimate with a two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub point: f64,
    #[serde(with = "crate::serde_ext")]
    pub lower: f64,
    #[serde(with = "crate::serde_ext")]
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub measure: RiskMeasure,
    pub beta: f64,
    pub gamma: f64,
    pub point: f64,
    #[serde(with = "crate::serde_ext")]
    pub lower: f64,
    #[serde(with = "crate::serde_ext")]
    pub upper: f64,
    pub at_risk: bool,
    pub r: f64,
}

/// `inf { alpha : F(alpha) >= level }` over the observed scores, `+inf` when no score
/// reaches the level and the smallest score when every score does.
fn empirical_inf(s: &ScoreSet, level: f64) -> f64 {
    if level <= 0.0 {
        return s.min();
    }
    let rank = ceil_index(level * s.len() as f64).max(1);
    order_statistic(s.sorted(), rank)
}

/// Smallest score `alpha` with empirical CDF `F(alpha) >= beta`.
pub fn empirical_var(s: &ScoreSet, beta: f64) -> Result<f64> {
    check_probability("beta", beta)?;
    Ok(empirical_inf(s, beta))
}

/// DKW half-width `sqrt(ln(2/gamma) / (2k))`.
pub fn dkw_width(k: usize, gamma: f64) -> f64 {
    ((2.0 / gamma).ln() / (2.0 * k as f64)).sqrt()
}

pub fn var_bounds(s: &ScoreSet, beta: f64, gamma: f64) -> Result<RiskEstimate> {
    check_probability("beta", beta)?;
    check_probability("gamma", gamma)?;
    let c = dkw_width(s.len(), gamma);
    Ok(RiskEstimate {
        point: empirical_inf(s, beta),
        lower: empirical_inf(s, beta - c),
        upper: empirical_inf(s, beta + c),
    })
}

/// `min_alpha alpha + sum_i [z_i - alpha]^+ / (k (1 - beta))`, evaluated at every
/// order statistic.
pub fn empirical_cvar(s: &ScoreSet, beta: f64) -> Result<f64> {
    check_probability("beta", beta)?;
    let z = s.sorted();
    let k = z.len();
    let scale = k as f64 * (1.0 - beta);
    // excess = sum over scores above z[j] of (z_i - z[j]), accumulated from the top.
    let mut excess = 0.0;
    let mut best = z[k - 1];
    for j in (0..k - 1).rev() {
        excess += (k - 1 - j) as f64 * (z[j + 1] - z[j]);
        best = best.min(z[j] + excess / scale);
    }
    Ok(best)
}

/// Half-widths `(upper, lower)` of the CVaR interval for unit support length.
pub fn cvar_widths(k: usize, beta: f64, gamma: f64) -> (f64, f64) {
    let denom = k as f64 * (1.0 - beta);
    let l = (3.0 / gamma).ln();
    ((5.0 * l / denom).sqrt(), (11.0 * l / denom).sqrt())
}

pub fn cvar_bounds(s: &ScoreSet, beta: f64, gamma: f64, a: f64, b: f64) -> Result<RiskEstimate> {
    check_probability("beta", beta)?;
    check_probability("gamma", gamma)?;
    check_support(a, b)?;
    if let Some(&score) = s.sorted().iter().find(|&&z| z < a || z > b) {
        return Err(Error::OutsideSupport { score, lo: a, hi: b });
    }
    let point = empirical_cvar(s, beta)?;
    let (wu, wl) = cvar_widths(s.len(), beta, gamma);
    Ok(RiskEstimate {
        point,
        lower: point - wl * (b - a),
        upper: point + wu * (b - a),
    })
}

/// At risk of `r`-non-conformance (with confidence `1 - gamma`) iff the lower bound of
/// the chosen measure is at least `r`.
pub fn check_nonconformance_risk(s: &ScoreSet, spec: &RiskSpec, r: f64) -> Result<RiskReport> {
    spec.validate()?;
    if r.is_nan() {
        return Err(Error::invalid("r must be a number"));
    }
    let est = match spec.measure {
        RiskMeasure::Var => var_bounds(s, spec.beta, spec.gamma)?,
        RiskMeasure::Cvar => {
            let (a, b) = spec.support.expect("validated");
            cvar_bounds(s, spec.beta, spec.gamma, a, b)?
        }
    };
    Ok(RiskReport {
        measure: spec.measure,
        beta: spec.beta,
        gamma: spec.gamma,
        point: est.point,
        lower: est.lower,
        upper: est.upper,
        at_risk: est.lower >= r,
        r,
    })
}
