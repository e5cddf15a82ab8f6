//! Distances between signals on a shared sample grid.
//!
//! All pointwise norms are Euclidean. Integrals use the left-rectangle rule: sample `k`
//! stands for the interval `[t_k, t_k + dt)`, so a signal of `N` samples spans `N dt`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::signals::Signal;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricKind {
    Sup,
    Lp(f64),
    Skorokhod,
}

/// Metric choice plus optional saturation bound, as written in configuration files:
/// `{"metric": "lp", "p": 2, "clip_b": 1.0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetricRepr", into = "MetricRepr")]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub clip_b: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricRepr {
    metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clip_b: Option<f64>,
}

impl TryFrom<MetricRepr> for MetricSpec {
    type Error = Error;

    fn try_from(r: MetricRepr) -> Result<Self> {
        let kind = match (r.metric.as_str(), r.p) {
            ("sup", None) => MetricKind::Sup,
            ("lp", Some(p)) => MetricKind::Lp(p),
            ("lp", None) => return Err(Error::invalid("metric \"lp\" requires \"p\"")),
            ("sup" | "skorokhod", Some(_)) => {
                return Err(Error::invalid(format!("metric {:?} takes no \"p\"", r.metric)))
            }
            ("skorokhod", None) => MetricKind::Skorokhod,
            (other, _) => {
                return Err(Error::invalid(format!(
                    "unknown metric {other:?} (expected \"sup\", \"lp\" or \"skorokhod\")"
                )))
            }
        };
        MetricSpec::new(kind, r.clip_b)
    }
}

impl From<MetricSpec> for MetricRepr {
    fn from(m: MetricSpec) -> Self {
        let (metric, p) = match m.kind {
            MetricKind::Sup => ("sup", None),
            MetricKind::Lp(p) => ("lp", Some(p)),
            MetricKind::Skorokhod => ("skorokhod", None),
        };
        MetricRepr {
            metric: metric.into(),
            p,
            clip_b: m.clip_b,
        }
    }
}

impl MetricSpec {
    pub fn new(kind: MetricKind, clip_b: Option<f64>) -> Result<Self> {
        if let MetricKind::Lp(p) = kind {
            if !(p >= 1.0) || !p.is_finite() {
                return Err(Error::invalid(format!("L_p metric needs finite p >= 1, got {p}")));
            }
        }
        if let Some(b) = clip_b {
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::invalid(format!("clip_b must be a positive finite number, got {b}")));
            }
        }
        Ok(MetricSpec { kind, clip_b })
    }

    pub fn sup() -> Self {
        MetricSpec { kind: MetricKind::Sup, clip_b: None }
    }

    pub fn lp(p: f64) -> Result<Self> {
        Self::new(MetricKind::Lp(p), None)
    }

    pub fn skorokhod() -> Self {
        MetricSpec { kind: MetricKind::Skorokhod, clip_b: None }
    }

    pub fn with_clip(self, b: f64) -> Result<Self> {
        Self::new(self.kind, Some(b))
    }

    /// Unclipped distance; clipping is applied separately where a bounded support is needed.
    pub fn distance(&self, y1: &Signal, y2: &Signal) -> Result<f64> {
        match self.kind {
            MetricKind::Sup => d_sup(y1, y2),
            MetricKind::Lp(p) => d_lp(y1, y2, p),
            MetricKind::Skorokhod => d_skorokhod(y1, y2),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            MetricKind::Sup => f.write_str("sup")?,
            MetricKind::Lp(p) => write!(f, "L{p}")?,
            MetricKind::Skorokhod => f.write_str("skorokhod")?,
        }
        if let Some(b) = self.clip_b {
            write!(f, " (clipped at {b})")?;
        }
        Ok(())
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `max_k |y1(t_k) - y2(t_k)|`.
pub fn d_sup(y1: &Signal, y2: &Signal) -> Result<f64> {
    y1.check_compatible(y2)?;
    Ok(y1
        .samples()
        .zip(y2.samples())
        .map(|(a, b)| euclid(a, b))
        .fold(0.0, f64::max))
}

/// `(sum_k |y1(t_k) - y2(t_k)|^p dt)^(1/p)`.
pub fn d_lp(y1: &Signal, y2: &Signal, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("L_p metric needs finite p >= 1, got {p}")));
    }
    y1.check_compatible(y2)?;
    let dt = y1.grid().dt;
    let sum: f64 = y1
        .samples()
        .zip(y2.samples())
        .map(|(a, b)| euclid(a, b).powf(p))
        .sum();
    Ok((sum * dt).powf(1.0 / p))
}

/// Skorokhod distance restricted to monotone couplings of the sample indices.
///
/// A coupling is a path from `(0, 0)` to `(N-1, N-1)` with steps `(1,0)`, `(0,1)`,
/// `(1,1)`; its cost is the largest `max(|t_i - t_j|, |y1(t_i) - y2(t_j)|)` along
/// the path. Returns the cheapest path cost.
pub fn d_skorokhod(y1: &Signal, y2: &Signal) -> Result<f64> {
    y1.check_compatible(y2)?;
    let n = y1.len();
    let dt = y1.grid().dt;
    let cost = |i: usize, j: usize| (i.abs_diff(j) as f64 * dt).max(euclid(y1.sample(i), y2.sample(j)));
    let mut prev = vec![f64::INFINITY; n];
    let mut row = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in 0..n {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { prev[j] } else { f64::INFINITY };
                let left = if j > 0 { row[j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { prev[j - 1] } else { f64::INFINITY };
                up.min(left).min(diag)
            };
            row[j] = best.max(cost(i, j));
        }
        std::mem::swap(&mut prev, &mut row);
    }
    Ok(prev[n - 1])
}

/// `min(x, b)`.
pub fn clip(x: f64, b: f64) -> f64 {
    x.min(b)
}
