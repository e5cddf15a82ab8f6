//! Built-in pairs of stochastic closed loops for experiments.
//!
//! Each pair runs two controllers on the same plant. Trajectory `i` of a generated
//! dataset draws its initial state from stream `(seed, i, 2)` and the noise of system
//! `s` from stream `(seed, i, s)`, so datasets do not depend on thread scheduling.

mod dubin;
mod spacecraft;

pub use dubin::{nominal_path, simulate_dubin, simulate_dubin_with, DubinConfig, Velocity};
pub use spacecraft::{simulate_spacecraft, simulate_spacecraft_with, SpacecraftConfig};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, stream_id};
use crate::signals::{Dataset, Role, Signal, TrajectoryPair};
use crate::stl::{parse, Formula, Interval, Predicate};
use crate::worstcase::{InputBox, PairSampler};
use crate::{Error, Result};

/// Tube radius for the Dubin target sets; puts the controller-1 satisfaction rate of
/// the tube specification between 0.90 and 0.99.
pub const DEFAULT_TUBE_RADIUS: f64 = 1.0;

const LANE_INPUT: u64 = 2;
const LANE_INPUT_2: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Dubin,
    Spacecraft,
}

/// Two controllers for one plant.
#[derive(Debug, Clone, PartialEq)]
pub enum PairSystem {
    Dubin {
        c1: DubinConfig,
        c2: DubinConfig,
        common_noise: bool,
    },
    Spacecraft {
        c1: SpacecraftConfig,
        c2: SpacecraftConfig,
        common_noise: bool,
    },
}

impl PairSystem {
    pub fn new(kind: SystemKind, common_noise: bool) -> Self {
        match kind {
            SystemKind::Dubin => PairSystem::Dubin {
                c1: DubinConfig::controller1(),
                c2: DubinConfig::controller2(),
                common_noise,
            },
            SystemKind::Spacecraft => PairSystem::Spacecraft {
                c1: SpacecraftConfig::controller1(),
                c2: SpacecraftConfig::controller2(),
                common_noise,
            },
        }
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            PairSystem::Dubin { .. } => SystemKind::Dubin,
            PairSystem::Spacecraft { .. } => SystemKind::Spacecraft,
        }
    }

    pub fn init_box(&self) -> &InputBox {
        match self {
            PairSystem::Dubin { c1, .. } => &c1.init_box,
            PairSystem::Spacecraft { c1, .. } => &c1.init_box,
        }
    }

    fn common_noise(&self) -> bool {
        match self {
            PairSystem::Dubin { common_noise, .. } | PairSystem::Spacecraft { common_noise, .. } => *common_noise,
        }
    }

    /// Trajectory of system `which` (1 or 2) with noise lane `(seed, index)`.
    pub fn simulate(&self, which: u8, init: &[f64], seed: u64, index: u64) -> Result<Signal> {
        let lane = if self.common_noise() { 0 } else { u64::from(which - 1) };
        let mut r = rng::stream(seed, stream_id(index, lane));
        match (self, which) {
            (PairSystem::Dubin { c1, .. }, 1) => simulate_dubin_with(c1, init, &mut r),
            (PairSystem::Dubin { c2, .. }, 2) => simulate_dubin_with(c2, init, &mut r),
            (PairSystem::Spacecraft { c1, .. }, 1) => simulate_spacecraft_with(c1, init, &mut r),
            (PairSystem::Spacecraft { c2, .. }, 2) => simulate_spacecraft_with(c2, init, &mut r),
            _ => Err(Error::invalid(format!("system index must be 1 or 2, got {which}"))),
        }
    }

    /// Pair `index` with separate initial states for the two systems.
    pub fn sample_pair(&self, u1: &[f64], u2: &[f64], seed: u64, index: u64) -> Result<TrajectoryPair> {
        let y1 = self.simulate(1, u1, seed, index)?;
        let y2 = self.simulate(2, u2, seed, index)?;
        TrajectoryPair::new(index, y1, y2, Some(u1.to_vec()))
    }
}

impl PairSampler for PairSystem {
    fn sample(&self, input: &[f64], seed: u64, index: u64) -> Result<TrajectoryPair> {
        self.sample_pair(input, input, seed, index)
    }
}

/// `n` pairs with uniformly drawn initial states; with `shared_inputs` both systems
/// start from the same state, otherwise system 2 gets its own draw.
pub fn generate_pair_dataset(system: &PairSystem, n: usize, seed: u64, shared_inputs: bool) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be at least 1"));
    }
    let init_box = system.init_box();
    let pairs = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let u1 = init_box.sample_uniform(&mut rng::stream(seed, stream_id(i, LANE_INPUT)));
            let u2 = if shared_inputs {
                u1.clone()
            } else {
                init_box.sample_uniform(&mut rng::stream(seed, stream_id(i, LANE_INPUT_2)))
            };
            system.sample_pair(&u1, &u2, seed, i)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(pairs, Role::Calibration)
}

/// Tube specification: for each step `i`, eventually within `[(i-1) Ts, i Ts]` the
/// position lies in the sup-norm ball of `radius` around step `i` of the noise-free
/// trajectory of `cfg` from the center of its initial set.
pub fn nominal_tube(cfg: &DubinConfig, radius: f64) -> Result<Formula> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("tube radius must be positive, got {radius}")));
    }
    let center: Vec<f64> = cfg
        .init_box
        .lows
        .iter()
        .zip(&cfg.init_box.highs)
        .map(|(lo, hi)| 0.5 * (lo + hi))
        .collect();
    let quiet = cfg.clone().with_noise_std(0.0);
    let nominal = simulate_dubin(&quiet, &center, 0)?;
    let parts = (1..=cfg.steps).map(|i| {
        let c = nominal.sample(i);
        let target = Predicate::in_box(vec![(0, c[0] - radius, c[0] + radius), (1, c[1] - radius, c[1] + radius)])
            .expect("finite bounds");
        let window = Interval::new((i - 1) as f64 * cfg.ts, i as f64 * cfg.ts).expect("ordered");
        Formula::eventually(window, Formula::Pred(target))
    });
    Ok(Formula::conjunction(parts))
}

/// Reach-avoid for the rendezvous: stay in a line-of-sight cone with bounded speed and
/// eventually reach the docking rectangle.
pub const PHI_SAT: &str = "G[1,5] ((x1 + x0 <= 0.3) & (x1 - x0 <= 0.3) & (abs(x1) <= 0.25) \
& (abs(x2) <= 0.25) & (abs(x3) <= 0.25)) & F[1,5] in(x0:[-0.05,0.05], x1:[-0.05,0.05])";

/// Cross-track error bound.
pub const PHI_CTE: &str = "G (abs(x0) <= 2.25)";

/// Named specifications.
#[derive(Debug, Clone)]
pub struct SpecLibrary {
    entries: Vec<(String, Formula)>,
}

impl SpecLibrary {
    pub fn standard() -> Self {
        let entries = vec![
            (
                "phi_dubin".to_string(),
                nominal_tube(&DubinConfig::controller1(), DEFAULT_TUBE_RADIUS).expect("default tube"),
            ),
            ("phi_sat".to_string(), parse(PHI_SAT).expect("phi_sat parses")),
            ("phi_cte".to_string(), parse(PHI_CTE).expect("phi_cte parses")),
        ];
        SpecLibrary { entries }
    }

    pub fn get(&self, name: &str) -> Option<&Formula> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn insert(&mut self, name: impl Into<String>, phi: Formula) {
        let name = name.into();
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, phi));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::d_sup;
    use crate::stl::robustness;

    #[test]
    fn datasets_are_reproducible() {
        let sys = PairSystem::new(SystemKind::Dubin, false);
        let a = generate_pair_dataset(&sys, 2, 11, true).unwrap();
        let b = generate_pair_dataset(&sys, 2, 11, true).unwrap();
        assert_eq!(a, b);
        for p in a.pairs() {
            assert_eq!(p.y1.sample(0), p.y2.sample(0));
            assert!(d_sup(&p.y1, &p.y2).unwrap() > 0.0);
        }
    }

    #[test]
    fn library_formulas_evaluate() {
        let lib = SpecLibrary::standard();
        let sat = generate_pair_dataset(&PairSystem::new(SystemKind::Spacecraft, false), 5, 1, true).unwrap();
        let dub = generate_pair_dataset(&PairSystem::new(SystemKind::Dubin, false), 5, 1, true).unwrap();
        for p in sat.pairs() {
            assert!(robustness(&p.y1, 0, lib.get("phi_sat").unwrap()).is_ok());
        }
        for p in dub.pairs() {
            assert!(robustness(&p.y1, 0, lib.get("phi_dubin").unwrap()).is_ok());
        }
    }

    #[test]
    fn huge_tube_is_always_satisfied() {
        let phi = nominal_tube(&DubinConfig::controller1(), 100.0).unwrap();
        let d = generate_pair_dataset(&PairSystem::new(SystemKind::Dubin, false), 20, 4, true).unwrap();
        assert!(d.signals().all(|s| robustness(s, 0, &phi).unwrap().value > 0.0));
    }
}
