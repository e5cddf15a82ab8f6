//! Conformance in the worst case over a compact box of inputs.
//!
//! The box is covered by a `kappa`-net; each net point gets its own conformal bound
//! (Algorithm 1) and the largest one is inflated by `L kappa`, where `L` bounds how fast
//! the distance distribution can change with the input. `L` is either supplied or
//! estimated from sampled difference quotients (Algorithm 2).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{check_probability, conformal_quantile, ConformanceVerdict, Method, ScoreSet};
use crate::metrics::MetricSpec;
use crate::quantile::ceil_index;
use crate::rng;
use crate::signals::TrajectoryPair;
use crate::{Error, Result};

/// Zero-distance input pairs are redrawn at most this many times per quotient.
pub const MAX_RESAMPLE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lows: Vec<f64>,
    pub highs: Vec<f64>,
}

impl InputBox {
    pub fn new(lows: Vec<f64>, highs: Vec<f64>) -> Result<Self> {
        let b = InputBox { lows, highs };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lows.is_empty() || self.lows.len() != self.highs.len() {
            return Err(Error::invalid(format!(
                "box needs matching non-empty lows/highs, got {} and {}",
                self.lows.len(),
                self.highs.len()
            )));
        }
        for (i, (lo, hi)) in self.lows.iter().zip(&self.highs).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("box axis {i} needs low < high, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lows.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        const TOL: f64 = 1e-12;
        u.len() == self.dim()
            && u.iter()
                .zip(self.lows.iter().zip(&self.highs))
                .all(|(x, (lo, hi))| *x >= lo - TOL && *x <= hi + TOL)
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lows
            .iter()
            .zip(&self.highs)
            .map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect()
    }
}

/// Sup distance between inputs.
pub fn input_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaNet {
    pub kappa: f64,
    /// Cells per axis.
    pub shape: Vec<usize>,
    /// Cell centers, last axis varying fastest.
    pub points: Vec<Vec<f64>>,
}

/// Per-axis cell centers: cells of width `2 kappa` from the low end, the last one
/// shrunk to end at the high edge.
fn axis_centers(lo: f64, hi: f64, kappa: f64) -> Vec<f64> {
    let n = ceil_index((hi - lo) / (2.0 * kappa)).max(1);
    (0..n)
        .map(|i| {
            if i + 1 < n {
                lo + kappa + 2.0 * kappa * i as f64
            } else {
                0.5 * (lo + 2.0 * kappa * i as f64 + hi)
            }
        })
        .collect()
}

pub fn build_kappa_net(b: &InputBox, kappa: f64) -> Result<KappaNet> {
    b.validate()?;
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    let axes: Vec<Vec<f64>> = b.lows.iter().zip(&b.highs).map(|(&lo, &hi)| axis_centers(lo, hi, kappa)).collect();
    let mut points = vec![Vec::new()];
    for axis in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    Ok(KappaNet {
        kappa,
        shape: axes.iter().map(Vec::len).collect(),
        points,
    })
}

/// Draws one pair of trajectories, both systems driven by `input`.
///
/// `(seed, index)` must fully determine the noise; calling twice with the same
/// arguments and different inputs yields common random numbers.
pub trait PairSampler: Sync {
    fn sample(&self, input: &[f64], seed: u64, index: u64) -> Result<TrajectoryPair>;
}

impl<F> PairSampler for F
where
    F: Fn(&[f64], u64, u64) -> Result<TrajectoryPair> + Sync,
{
    fn sample(&self, input: &[f64], seed: u64, index: u64) -> Result<TrajectoryPair> {
        self(input, seed, index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellBound {
    pub cell: usize,
    pub center: Vec<f64>,
    #[serde(with = "crate::serde_ext")]
    pub z_bar: f64,
    pub p_index: usize,
    pub k: usize,
    pub max_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Algorithm1Result {
    #[serde(with = "crate::serde_ext")]
    pub z_bar: f64,
    pub per_cell: Vec<CellBound>,
}

/// Per-cell conformal bounds at the net points; cell `i` draws from seed `seed ^ i`.
pub fn algorithm1(
    net: &KappaNet,
    sampler: &dyn PairSampler,
    n_per_cell: usize,
    m: &MetricSpec,
    delta: f64,
    seed: u64,
) -> Result<Algorithm1Result> {
    check_probability("delta", delta)?;
    if n_per_cell == 0 {
        return Err(Error::invalid("n_per_cell must be at least 1"));
    }
    let per_cell = net
        .points
        .par_iter()
        .enumerate()
        .map(|(cell, center)| {
            let cell_seed = seed ^ cell as u64;
            let scores = (0..n_per_cell as u64)
                .into_par_iter()
                .map(|j| {
                    let pair = sampler.sample(center, cell_seed, j)?;
                    m.distance(&pair.y1, &pair.y2)
                })
                .collect::<Result<Vec<f64>>>()?;
            let s = ScoreSet::new(scores)?;
            let b = conformal_quantile(&s, delta)?;
            Ok(CellBound {
                cell,
                center: center.clone(),
                z_bar: b.z_bar,
                p_index: b.p_index,
                k: b.k,
                max_score: s.max(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let z_bar = per_cell.iter().map(|c| c.z_bar).fold(f64::NEG_INFINITY, f64::max);
    Ok(Algorithm1Result { z_bar, per_cell })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    #[serde(with = "crate::serde_ext")]
    pub l_bar: f64,
    pub delta_l: f64,
    pub p_index: usize,
    pub quotients: Vec<f64>,
    /// Input pairs redrawn because they coincided.
    pub resampled: usize,
}

/// Difference quotients `|d(U') - d(U'')| / dist(U', U'')` for `k_l` uniformly drawn
/// input pairs, both members simulated with the same noise; `l_bar` is their conformal
/// bound at level `delta_l`.
pub fn algorithm2(
    b: &InputBox,
    sampler: &dyn PairSampler,
    k_l: usize,
    delta_l: f64,
    m: &MetricSpec,
    seed: u64,
) -> Result<LipschitzEstimate> {
    b.validate()?;
    check_probability("delta_L", delta_l)?;
    if k_l == 0 {
        return Err(Error::invalid("K_L must be at least 1"));
    }
    let noise_seed = rng::mix64(seed);
    let results = (0..k_l as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, rng::stream_id(i, 5));
            let mut resampled = 0;
            let (u1, u2, gap) = loop {
                let u1 = b.sample_uniform(&mut r);
                let u2 = b.sample_uniform(&mut r);
                let gap = input_distance(&u1, &u2);
                if gap > 0.0 {
                    break (u1, u2, gap);
                }
                resampled += 1;
                if resampled > MAX_RESAMPLE {
                    return Err(Error::DegenerateInputSample(MAX_RESAMPLE));
                }
            };
            let p1 = sampler.sample(&u1, noise_seed, i)?;
            let p2 = sampler.sample(&u2, noise_seed, i)?;
            let d1 = m.distance(&p1.y1, &p1.y2)?;
            let d2 = m.distance(&p2.y1, &p2.y2)?;
            Ok(((d1 - d2).abs() / gap, resampled))
        })
        .collect::<Result<Vec<_>>>()?;
    let quotients: Vec<f64> = results.iter().map(|r| r.0).collect();
    let bound = conformal_quantile(&ScoreSet::new(quotients.clone())?, delta_l)?;
    Ok(LipschitzEstimate {
        l_bar: bound.z_bar,
        delta_l,
        p_index: bound.p_index,
        quotients,
        resampled: results.iter().map(|r| r.1).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzSource {
    Known(f64),
    Estimate { k_l: usize, delta_l: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseBound {
    #[serde(with = "crate::serde_ext")]
    pub z_bar: f64,
    #[serde(with = "crate::serde_ext")]
    pub l_bar: f64,
    pub kappa: f64,
    #[serde(with = "crate::serde_ext")]
    pub total: f64,
    pub delta: f64,
    /// Zero when `L` was supplied.
    pub delta_l: f64,
    pub lipschitz_estimated: bool,
    pub per_cell: Vec<CellBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<LipschitzEstimate>,
}

impl WorstCaseBound {
    /// Probability with which `total` may fail to bound the worst-case distance.
    pub fn failure_prob(&self) -> f64 {
        self.delta + self.delta_l
    }
}

/// Parameters of a worst-case conformance check.
#[derive(Debug, Clone, PartialEq)]
pub struct Def2Params {
    pub input_box: InputBox,
    pub kappa: f64,
    pub n_per_cell: usize,
    pub delta: f64,
    pub lipschitz: LipschitzSource,
    pub epsilon: f64,
    pub seed: u64,
}

/// `sup_U d(Y1, Y2) <= z_bar + L kappa` with probability `1 - delta` (known `L`) or
/// `1 - delta - delta_L` (estimated `L`); conformant iff that total is at most `epsilon`.
pub fn check_def2(
    params: &Def2Params,
    sampler: &dyn PairSampler,
    m: &MetricSpec,
) -> Result<(ConformanceVerdict, WorstCaseBound)> {
    let net = build_kappa_net(&params.input_box, params.kappa)?;
    let a1 = algorithm1(&net, sampler, params.n_per_cell, m, params.delta, params.seed)?;
    let (l_bar, delta_l, lipschitz) = match params.lipschitz {
        LipschitzSource::Known(l) => {
            if !(l >= 0.0) || !l.is_finite() {
                return Err(Error::invalid(format!("known_L must be finite and non-negative, got {l}")));
            }
            (l, 0.0, None)
        }
        LipschitzSource::Estimate { k_l, delta_l } => {
            let est = algorithm2(&params.input_box, sampler, k_l, delta_l, m, params.seed)?;
            if params.delta + delta_l >= 1.0 {
                return Err(Error::VacuousGuarantee(params.delta + delta_l));
            }
            (est.l_bar, delta_l, Some(est))
        }
    };
    let total = a1.z_bar + l_bar * params.kappa;
    let (p_index, k) = a1.per_cell.first().map_or((0, 0), |c| (c.p_index, c.k));
    let bound = WorstCaseBound {
        z_bar: a1.z_bar,
        l_bar,
        kappa: params.kappa,
        total,
        delta: params.delta,
        delta_l,
        lipschitz_estimated: lipschitz.is_some(),
        per_cell: a1.per_cell,
        lipschitz,
    };
    let verdict = ConformanceVerdict {
        epsilon: params.epsilon,
        delta: bound.failure_prob(),
        z_bar: total,
        p_index,
        k,
        conformant: total <= params.epsilon,
        method: Method::Def2,
        metric: *m,
    };
    Ok((verdict, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{Signal, TimeGrid};

    fn const_pair(id: u64, gap: f64) -> TrajectoryPair {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        TrajectoryPair::new(
            id,
            Signal::scalar(g, &[0.0, 0.0]).unwrap(),
            Signal::scalar(g, &[gap, gap]).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn unit_interval_net() {
        let net = build_kappa_net(&InputBox::new(vec![0.0], vec![1.0]).unwrap(), 0.25).unwrap();
        assert_eq!(net.points, vec![vec![0.25], vec![0.75]]);
    }

    #[test]
    fn square_net_has_25_cells() {
        let b = InputBox::new(vec![-1.0, -1.0], vec![0.0, 0.0]).unwrap();
        let net = build_kappa_net(&b, 0.1).unwrap();
        assert_eq!(net.points.len(), 25);
        assert!(build_kappa_net(&b, 0.0).is_err());
    }

    #[test]
    fn shrunk_last_cell_stays_inside() {
        let net = build_kappa_net(&InputBox::new(vec![0.0], vec![1.0]).unwrap(), 0.3).unwrap();
        assert_eq!(net.points.len(), 2);
        assert!((net.points[1][0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn algorithm1_two_cells() {
        let net = KappaNet {
            kappa: 0.5,
            shape: vec![2],
            points: vec![vec![0.1], vec![0.2]],
        };
        let sampler = |u: &[f64], _s: u64, i: u64| Ok(const_pair(i, u[0]));
        let r = algorithm1(&net, &sampler, 1, &MetricSpec::sup(), 0.5, 0).unwrap();
        let cells: Vec<f64> = r.per_cell.iter().map(|c| c.z_bar).collect();
        assert_eq!(cells, vec![0.1, 0.2]);
        assert_eq!(r.z_bar, 0.2);
    }

    #[test]
    fn algorithm2_linear_and_constant() {
        let b = InputBox::new(vec![0.0], vec![1.0]).unwrap();
        let linear = |u: &[f64], _s: u64, i: u64| Ok(const_pair(i, 3.0 * u[0]));
        let est = algorithm2(&b, &linear, 19, 0.05, &MetricSpec::sup(), 7).unwrap();
        assert!(est.quotients.iter().all(|q| (q - 3.0).abs() < 1e-9));
        assert!((est.l_bar - 3.0).abs() < 1e-9);
        let flat = |_u: &[f64], _s: u64, i: u64| Ok(const_pair(i, 0.5));
        assert_eq!(algorithm2(&b, &flat, 19, 0.05, &MetricSpec::sup(), 7).unwrap().l_bar, 0.0);
    }

    #[test]
    fn known_zero_lipschitz_reduces_to_max() {
        let sampler = |u: &[f64], _s: u64, i: u64| Ok(const_pair(i, u[0]));
        let params = Def2Params {
            input_box: InputBox::new(vec![0.0], vec![1.0]).unwrap(),
            kappa: 0.25,
            n_per_cell: 1,
            delta: 0.5,
            lipschitz: LipschitzSource::Known(0.0),
            epsilon: 0.8,
            seed: 1,
        };
        let (v, b) = check_def2(&params, &sampler, &MetricSpec::sup()).unwrap();
        assert_eq!(b.total, 0.75);
        assert!(v.conformant);
        assert_eq!(v.delta, 0.5);
    }
}
