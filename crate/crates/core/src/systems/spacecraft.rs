//! Planar spacecraft rendezvous as a discrete double integrator under linear
//! state feedback `u = -a p - b v`:
//!
//! ```text
//! p+ = p + Ts v + eta_p
//! v+ = v + Ts u + eta_v
//! ```
//!
//! The state `[x, y, vx, vy]` is recorded at every sample.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::signals::{Signal, TimeGrid};
use crate::worstcase::InputBox;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacecraftConfig {
    pub ts: f64,
    pub horizon: usize,
    /// Per-state noise variances.
    pub noise_var: [f64; 4],
    /// Initial positions; initial velocity is zero.
    pub init_box: InputBox,
    pub position_gain: f64,
    pub velocity_gain: f64,
}

impl SpacecraftConfig {
    fn base(position_gain: f64, velocity_gain: f64) -> Self {
        SpacecraftConfig {
            ts: 1.0,
            horizon: 5,
            noise_var: [1e-4, 1e-4, 5e-8, 5e-8],
            init_box: InputBox {
                lows: vec![-0.1, -0.1],
                highs: vec![0.1, 0.1],
            },
            position_gain,
            velocity_gain,
        }
    }

    pub fn controller1() -> Self {
        Self::base(0.8, 1.8)
    }

    pub fn controller2() -> Self {
        Self::base(0.6, 1.5)
    }

    pub fn with_gains(mut self, position_gain: f64, velocity_gain: f64) -> Self {
        self.position_gain = position_gain;
        self.velocity_gain = velocity_gain;
        self
    }

    pub fn without_noise(mut self) -> Self {
        self.noise_var = [0.0; 4];
        self
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: 0.0,
            dt: self.ts,
            steps: self.horizon + 1,
        }
    }
}

pub fn simulate_spacecraft_with<R: Rng + ?Sized>(cfg: &SpacecraftConfig, init: &[f64], rng: &mut R) -> Result<Signal> {
    if !(cfg.ts > 0.0) || cfg.horizon == 0 || cfg.noise_var.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("spacecraft config needs Ts > 0, horizon >= 1, variances >= 0"));
    }
    let start: [f64; 4] = match init {
        [x, y] => [*x, *y, 0.0, 0.0],
        [x, y, vx, vy] => [*x, *y, *vx, *vy],
        _ => return Err(Error::invalid("spacecraft initial state needs 2 or 4 components")),
    };
    if !cfg.init_box.contains(&start[..2]) {
        return Err(Error::invalid(format!("initial position {:?} lies outside the initial set", &start[..2])));
    }
    let std: Vec<f64> = cfg.noise_var.iter().map(|v| v.sqrt()).collect();
    let mut s = start;
    let mut values = Vec::with_capacity(4 * (cfg.horizon + 1));
    values.extend(s);
    for _ in 0..cfg.horizon {
        let mut next = [0.0; 4];
        for axis in 0..2 {
            let (p, v) = (s[axis], s[axis + 2]);
            let u = -cfg.position_gain * p - cfg.velocity_gain * v;
            next[axis] = p + cfg.ts * v;
            next[axis + 2] = v + cfg.ts * u;
        }
        for (x, sd) in next.iter_mut().zip(&std) {
            let e: f64 = rng.sample(StandardNormal);
            *x += sd * e;
        }
        s = next;
        values.extend(s);
    }
    Signal::new(cfg.grid(), 4, values)
}

pub fn simulate_spacecraft(cfg: &SpacecraftConfig, init: &[f64], seed: u64) -> Result<Signal> {
    simulate_spacecraft_with(cfg, init, &mut rng::stream(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_rest_without_gain_or_noise_is_constant() {
        let cfg = SpacecraftConfig::controller1().with_gains(0.0, 0.0).without_noise();
        let s = simulate_spacecraft(&cfg, &[0.05, -0.02], 1).unwrap();
        for k in 0..s.len() {
            assert_eq!(s.sample(k), &[0.05, -0.02, 0.0, 0.0]);
        }
    }

    #[test]
    fn closed_loops_contract() {
        for cfg in [SpacecraftConfig::controller1(), SpacecraftConfig::controller2()] {
            let s = simulate_spacecraft(&cfg.without_noise(), &[0.1, 0.1], 0).unwrap();
            let last = s.sample(s.len() - 1);
            assert!(last[0].abs() < 0.05 && last[1].abs() < 0.05, "{last:?}");
        }
    }
}
