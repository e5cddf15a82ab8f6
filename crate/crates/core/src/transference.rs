//! Transferring STL guarantees from system 1 to system 2.
//!
//! If a quality measure `C` is Hölder continuous with respect to the trajectory metric,
//! `|C(y1) - C(y2)| <= H d(y1, y2)^gamma`, then a lower bound `c1` on `C(Y1)` that holds
//! with probability `1 - delta_bar` and a bound `d <= epsilon` that holds with
//! probability `1 - delta` give `C(Y2) >= c1 - H epsilon^gamma` with probability
//! `1 - delta - delta_bar`. For coherent risk measures and `gamma = 1` the same
//! argument gives `R(-C(Y2)) <= R(-C(Y1)) + H R(d)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::MetricSpec;
use crate::quantile::{conformal_rank, order_statistic, sorted_copy};
use crate::signals::{Dataset, Signal};
use crate::stl::{robustness, Formula};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HolderSource {
    /// STL robustness against the sup metric.
    RhoVsDsup,
    /// STL robustness against the Skorokhod metric for signals with Lipschitz constant `k_y`.
    RhoVsSkorokhod { k_y: f64 },
    /// Quadratic cost against the `L_1` metric for signals bounded by `y_max`.
    QuadcostVsD1 { y_max: f64 },
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderSpec {
    #[serde(rename = "H")]
    pub h: f64,
    pub gamma: f64,
    pub source: HolderSource,
}

impl HolderSpec {
    pub fn rho_vs_dsup() -> Self {
        HolderSpec {
            h: 1.0,
            gamma: 1.0,
            source: HolderSource::RhoVsDsup,
        }
    }

    pub fn rho_vs_skorokhod(k_y: f64) -> Result<Self> {
        if !(k_y >= 0.0) || !k_y.is_finite() {
            return Err(Error::invalid(format!("K_y must be finite and non-negative, got {k_y}")));
        }
        Ok(HolderSpec {
            h: 1.0 + k_y,
            gamma: 1.0,
            source: HolderSource::RhoVsSkorokhod { k_y },
        })
    }

    pub fn quadcost_vs_d1(y_max: f64) -> Result<Self> {
        if !(y_max > 0.0) || !y_max.is_finite() {
            return Err(Error::invalid(format!("y_max must be finite and positive, got {y_max}")));
        }
        Ok(HolderSpec {
            h: 2.0 * y_max,
            gamma: 1.0,
            source: HolderSource::QuadcostVsD1 { y_max },
        })
    }

    pub fn custom(h: f64, gamma: f64) -> Result<Self> {
        let spec = HolderSpec {
            h,
            gamma,
            source: HolderSource::Custom,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite() && self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!(
                "Hölder constants need H > 0 and gamma > 0, got H = {}, gamma = {}",
                self.h, self.gamma
            )));
        }
        Ok(())
    }

    /// `H * eps^gamma`.
    pub fn slack(&self, epsilon: f64) -> f64 {
        self.h * epsilon.powf(self.gamma)
    }

    /// Built from constants measured on data rather than known a priori.
    pub fn is_measured(&self) -> bool {
        matches!(self.source, HolderSource::RhoVsSkorokhod { .. } | HolderSource::QuadcostVsD1 { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    #[serde(with = "crate::serde_ext")]
    pub c1: f64,
    pub delta_bar: f64,
    #[serde(with = "crate::serde_ext")]
    pub epsilon: f64,
    pub delta: f64,
    pub holder: HolderSpec,
    #[serde(with = "crate::serde_ext")]
    pub c2_bound: f64,
    pub failure_prob: f64,
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in [0, 1), got {v}")))
    }
}

/// `Prob(C(Y2) >= c1 - H eps^gamma) >= 1 - delta - delta_bar`.
pub fn transfer_probabilistic(c1: f64, delta_bar: f64, epsilon: f64, delta: f64, h: &HolderSpec) -> Result<TransferResult> {
    h.validate()?;
    check_unit("delta_bar", delta_bar)?;
    check_unit("delta", delta)?;
    if c1.is_nan() {
        return Err(Error::invalid("c1 must be a number"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::invalid(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let failure_prob = delta + delta_bar;
    if failure_prob >= 1.0 {
        return Err(Error::VacuousGuarantee(failure_prob));
    }
    Ok(TransferResult {
        c1,
        delta_bar,
        epsilon,
        delta,
        holder: *h,
        c2_bound: c1 - h.slack(epsilon),
        failure_prob,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTransferResult {
    pub r1: f64,
    pub r: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub r2_bound: f64,
}

/// `R(-C(Y2)) <= R(-C(Y1)) + H R(d)`; needs `gamma = 1`.
pub fn transfer_risk(r1: f64, r: f64, h: &HolderSpec) -> Result<RiskTransferResult> {
    h.validate()?;
    if h.gamma != 1.0 {
        return Err(Error::invalid(format!("risk transfer needs gamma = 1, got {}", h.gamma)));
    }
    Ok(RiskTransferResult {
        r1,
        r,
        h: h.h,
        r2_bound: r1 + h.h * r,
    })
}

/// Robustness at time 0 of both systems, per pair.
pub fn robustness_pairs(d: &Dataset, phi: &Formula) -> Result<Vec<(f64, f64)>> {
    d.pairs()
        .par_iter()
        .map(|p| Ok((robustness(&p.y1, 0, phi)?.value, robustness(&p.y2, 0, phi)?.value)))
        .collect()
}

/// Largest `c` with `Prob(rho >= c) >= 1 - delta` by split conformal prediction on `-rho`.
/// Infinite robustness values are allowed.
pub fn conformal_lower_bound(rho: &[f64], delta: f64) -> Result<f64> {
    if rho.is_empty() {
        return Err(Error::EmptyScores);
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie strictly between 0 and 1, got {delta}")));
    }
    let neg: Vec<f64> = rho.iter().map(|r| -r).collect();
    let sorted = sorted_copy(&neg);
    Ok(-order_statistic(&sorted, conformal_rank(sorted.len(), delta)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    #[serde(with = "crate::serde_ext")]
    pub c1: f64,
    #[serde(with = "crate::serde_ext")]
    pub epsilon: f64,
    #[serde(rename = "H")]
    pub h: f64,
    pub gamma: f64,
    #[serde(with = "crate::serde_ext")]
    pub c2_bound: f64,
    pub failure_prob: f64,
    /// Fraction of test pairs with `rho(y2) >= c2_bound`.
    pub empirical_fraction: f64,
    /// Conformal lower bound on `rho(y2)` at level `delta_bar`, from the test set.
    #[serde(with = "crate::serde_ext")]
    pub observed_c2: f64,
    pub holder_source: HolderSource,
    /// The Hölder constant rests on constants measured from data.
    pub measured_constants: bool,
}

pub fn empirical_transfer_check(test: &Dataset, phi: &Formula, result: &TransferResult) -> Result<TransferReport> {
    let rho2: Vec<f64> = robustness_pairs(test, phi)?.into_iter().map(|r| r.1).collect();
    transfer_report_from_scores(&rho2, result)
}

/// [`empirical_transfer_check`] from precomputed test robustness values of system 2.
pub fn transfer_report_from_scores(rho2: &[f64], result: &TransferResult) -> Result<TransferReport> {
    if rho2.is_empty() {
        return Err(Error::EmptyScores);
    }
    let above = rho2.iter().filter(|&&r| r >= result.c2_bound).count();
    let observed_c2 = if result.delta_bar > 0.0 {
        conformal_lower_bound(rho2, result.delta_bar)?
    } else {
        rho2.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(TransferReport {
        c1: result.c1,
        epsilon: result.epsilon,
        h: result.holder.h,
        gamma: result.holder.gamma,
        c2_bound: result.c2_bound,
        failure_prob: result.failure_prob,
        empirical_fraction: above as f64 / rho2.len() as f64,
        observed_c2,
        holder_source: result.holder.source,
        measured_constants: result.holder.is_measured(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderConstants {
    #[serde(rename = "K_y")]
    pub k_y: f64,
    pub y_max: f64,
}

/// Largest discrete slope `|y(t_{k+1}) - y(t_k)| / dt` and largest sample norm over all
/// signals of both systems.
pub fn measure_holder_constants(d: &Dataset) -> HolderConstants {
    let mut k_y: f64 = 0.0;
    let mut y_max: f64 = 0.0;
    for s in d.signals() {
        let dt = s.grid().dt;
        let rows: Vec<&[f64]> = s.samples().collect();
        for w in rows.windows(2) {
            k_y = k_y.max(norm_diff(w[1], w[0]) / dt);
        }
        for r in &rows {
            y_max = y_max.max(r.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
    }
    HolderConstants { k_y, y_max }
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `sum_k |y(t_k)|^2 dt`, the quadratic cost rule matching the `L_1` metric discretization.
pub fn quadratic_cost(y: &Signal) -> f64 {
    y.samples().map(|r| r.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() * y.grid().dt
}

/// Metric paired with a Hölder spec: the metric the constants were derived for.
pub fn natural_metric(h: &HolderSpec) -> Option<MetricSpec> {
    match h.source {
        HolderSource::RhoVsDsup => Some(MetricSpec::sup()),
        HolderSource::RhoVsSkorokhod { .. } => Some(MetricSpec::skorokhod()),
        HolderSource::QuadcostVsD1 { .. } => MetricSpec::lp(1.0).ok(),
        HolderSource::Custom => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilistic_examples() {
        let h = HolderSpec::rho_vs_dsup();
        let t = transfer_probabilistic(0.31, 0.1, 0.59, 0.1, &h).unwrap();
        assert!((t.c2_bound + 0.28).abs() < 1e-12);
        assert!((t.failure_prob - 0.2).abs() < 1e-12);
        assert_eq!(transfer_probabilistic(0.4, 0.1, 0.0, 0.1, &h).unwrap().c2_bound, 0.4);
        let h2 = HolderSpec::custom(2.0, 0.5).unwrap();
        assert_eq!(transfer_probabilistic(1.5, 0.1, 0.25, 0.1, &h2).unwrap().c2_bound, 0.5);
        assert!(matches!(transfer_probabilistic(0.0, 0.6, 0.1, 0.4, &h), Err(Error::VacuousGuarantee(_))));
        assert!(transfer_probabilistic(0.0, 0.1, -0.1, 0.1, &h).is_err());
    }

    #[test]
    fn risk_examples() {
        let h = HolderSpec::rho_vs_dsup();
        assert!((transfer_risk(-0.27, 0.79, &h).unwrap().r2_bound - 0.52).abs() < 1e-12);
        assert_eq!(transfer_risk(-0.27, 0.0, &h).unwrap().r2_bound, -0.27);
        let sk = HolderSpec::rho_vs_skorokhod(2.0).unwrap();
        assert!((transfer_risk(0.1, 0.1, &sk).unwrap().r2_bound - 0.4).abs() < 1e-12);
        assert!(transfer_risk(0.0, 0.1, &HolderSpec::custom(1.0, 0.5).unwrap()).is_err());
    }

    #[test]
    fn lower_bound_handles_infinities() {
        assert_eq!(conformal_lower_bound(&[f64::INFINITY; 30], 0.1).unwrap(), f64::INFINITY);
        assert_eq!(conformal_lower_bound(&[1.0; 5], 0.1).unwrap(), f64::NEG_INFINITY);
    }
}
