//! Split conformal bounds on trajectory distances.
//!
//! With `k` calibration scores `Z^(1) <= ... <= Z^(k)` and the sentinel
//! `Z^(k+1) = +inf`, the rank `p = ceil((k+1)(1-delta))` order statistic `z_bar`
//! satisfies `Prob(Z <= z_bar) >= 1 - delta` for an exchangeable test score `Z`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::MetricSpec;
use crate::quantile::{conformal_rank, order_statistic, sorted_copy};
use crate::signals::Dataset;
use crate::{Error, Result};

/// Non-empty collection of finite scores with a sorted copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    scores: Vec<f64>,
    sorted: Vec<f64>,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyScores);
        }
        if let Some((i, v)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("score {i} is not finite ({v})")));
        }
        let sorted = sorted_copy(&scores);
        Ok(ScoreSet { scores, sorted })
    }

    /// Scores in input order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// Elementwise `f(score)`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScoreSet> {
        ScoreSet::new(self.scores.iter().map(|&z| f(z)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalBound {
    #[serde(with = "crate::serde_ext")]
    pub z_bar: f64,
    pub delta: f64,
    pub k: usize,
    pub p_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Fixed input distribution.
    Def1,
    /// Worst case over a compact input set.
    Def2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceVerdict {
    pub epsilon: f64,
    pub delta: f64,
    /// For `def2` this already includes the Lipschitz correction.
    #[serde(with = "crate::serde_ext")]
    pub z_bar: f64,
    pub p_index: usize,
    pub k: usize,
    pub conformant: bool,
    pub method: Method,
    pub metric: MetricSpec,
}

pub(crate) fn check_probability(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie strictly between 0 and 1, got {v}")))
    }
}

/// The `ceil((k+1)(1-delta))`-th smallest score, `+inf` when that rank exceeds `k`.
pub fn conformal_quantile(s: &ScoreSet, delta: f64) -> Result<ConformalBound> {
    check_probability("delta", delta)?;
    let k = s.len();
    let p_index = conformal_rank(k, delta);
    Ok(ConformalBound {
        z_bar: order_statistic(s.sorted(), p_index),
        delta,
        k,
        p_index,
    })
}

/// `d(y1, y2)` for every pair, in dataset order.
pub fn scores_from_dataset(d: &Dataset, m: &MetricSpec) -> Result<ScoreSet> {
    let scores = d
        .pairs()
        .par_iter()
        .map(|pair| {
            m.distance(&pair.y1, &pair.y2).map_err(|e| match e {
                Error::GridMismatch { detail, .. } => Error::GridMismatch {
                    trajectory: Some(pair.id),
                    detail,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    ScoreSet::new(scores)
}

/// Verdict from precomputed calibration scores.
pub fn verdict_from_scores(s: &ScoreSet, m: &MetricSpec, epsilon: f64, delta: f64) -> Result<ConformanceVerdict> {
    if epsilon.is_nan() {
        return Err(Error::invalid("epsilon must be a number"));
    }
    let b = conformal_quantile(s, delta)?;
    Ok(ConformanceVerdict {
        epsilon,
        delta,
        z_bar: b.z_bar,
        p_index: b.p_index,
        k: b.k,
        conformant: b.z_bar <= epsilon,
        method: Method::Def1,
        metric: *m,
    })
}

/// `(epsilon, delta)`-conformance under the input distribution that generated `d_cal`.
pub fn check_def1(d_cal: &Dataset, m: &MetricSpec, epsilon: f64, delta: f64) -> Result<ConformanceVerdict> {
    verdict_from_scores(&scores_from_dataset(d_cal, m)?, m, epsilon, delta)
}

/// Fraction of test scores at or below `z_bar`.
pub fn validation_score(test: &ScoreSet, z_bar: f64) -> f64 {
    let covered = test.sorted().partition_point(|&z| z <= z_bar);
    covered as f64 / test.len() as f64
}
