//! Dubin's car with a prescribed heading schedule and a feedback speed law.
//!
//! ```text
//! theta(t) = Ts pi + sum_{i=1..t} omega(i) Ts
//! p(t) = p(t-1) + Ts v(t) (cos theta(t), sin theta(t)) + eta(t),   t = 1..steps
//! ```
//!
//! `omega` is `+pi / (steps Ts)` for the first half of the horizon and `-pi / (steps Ts)`
//! for the second. The speed `v(t)` comes from [`Velocity`].

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::signals::{Signal, TimeGrid};
use crate::worstcase::InputBox;
use crate::{Error, Result};

/// Speed law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum Velocity {
    /// `v(t) = clamp(gain * e(t), 0, v_max)` where `e(t)` is the distance from `p(t-1)`
    /// to the waypoint `w(t)` measured along the heading `theta(t)`, and `w` is the
    /// noise-free unit-speed path from the same initial state. A car ahead of its
    /// waypoint sees `e < 0` and stops.
    Tracking { gain: f64, v_max: f64 },
    Constant { v: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DubinConfig {
    pub ts: f64,
    pub steps: usize,
    pub noise_std: f64,
    pub init_box: InputBox,
    pub velocity: Velocity,
}

impl DubinConfig {
    fn base(velocity: Velocity) -> Self {
        DubinConfig {
            ts: 0.1,
            steps: 50,
            noise_std: 0.005f64.sqrt(),
            init_box: InputBox {
                lows: vec![-1.0, -1.0],
                highs: vec![0.0, 0.0],
            },
            velocity,
        }
    }

    /// Controller 1 stand-in.
    pub fn controller1() -> Self {
        Self::base(Velocity::Tracking { gain: 2.0, v_max: 2.0 })
    }

    /// Controller 2 stand-in: stiffer gain, tighter speed limit.
    pub fn controller2() -> Self {
        Self::base(Velocity::Tracking { gain: 3.5, v_max: 1.5 })
    }

    pub fn with_velocity(mut self, velocity: Velocity) -> Self {
        self.velocity = velocity;
        self
    }

    pub fn with_noise_std(mut self, std: f64) -> Self {
        self.noise_std = std;
        self
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: 0.0,
            dt: self.ts,
            steps: self.steps + 1,
        }
    }

    pub fn omega(&self, i: usize) -> f64 {
        let w = PI / (self.steps as f64 * self.ts);
        if 2 * i <= self.steps {
            w
        } else {
            -w
        }
    }

    /// `theta(0..=steps)`.
    pub fn headings(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.steps + 1);
        let mut acc = self.ts * PI;
        theta.push(acc);
        for i in 1..=self.steps {
            acc += self.omega(i) * self.ts;
            theta.push(acc);
        }
        theta
    }

    fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0) || self.steps == 0 || !(self.noise_std >= 0.0) {
            return Err(Error::invalid("Dubin config needs Ts > 0, steps >= 1, noise_std >= 0"));
        }
        if let Velocity::Tracking { gain, v_max } = self.velocity {
            if !(gain >= 0.0 && v_max >= 0.0) {
                return Err(Error::invalid("tracking law needs non-negative gain and v_max"));
            }
        }
        Ok(())
    }
}

/// Noise-free unit-speed path from `init`, one point per sample.
pub fn nominal_path(cfg: &DubinConfig, init: &[f64]) -> Vec<[f64; 2]> {
    let theta = cfg.headings();
    let mut w = vec![[init[0], init[1]]];
    for t in 1..=cfg.steps {
        let [x, y] = w[t - 1];
        w.push([x + cfg.ts * theta[t].cos(), y + cfg.ts * theta[t].sin()]);
    }
    w
}

pub fn simulate_dubin_with<R: Rng + ?Sized>(cfg: &DubinConfig, init: &[f64], rng: &mut R) -> Result<Signal> {
    cfg.validate()?;
    if !cfg.init_box.contains(init) {
        return Err(Error::invalid(format!("initial state {init:?} lies outside the initial set")));
    }
    let theta = cfg.headings();
    let waypoints = nominal_path(cfg, init);
    let mut values = Vec::with_capacity(2 * (cfg.steps + 1));
    let (mut x, mut y) = (init[0], init[1]);
    values.extend([x, y]);
    for t in 1..=cfg.steps {
        let v = match cfg.velocity {
            Velocity::Constant { v } => v,
            Velocity::Tracking { gain, v_max } => {
                let [wx, wy] = waypoints[t];
                let along = (wx - x) * theta[t].cos() + (wy - y) * theta[t].sin();
                (gain * along).clamp(0.0, v_max)
            }
        };
        let ex: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        x += cfg.ts * v * theta[t].cos() + cfg.noise_std * ex;
        y += cfg.ts * v * theta[t].sin() + cfg.noise_std * ey;
        values.extend([x, y]);
    }
    Signal::new(cfg.grid(), 2, values)
}

/// One position trajectory; `seed` fully determines the noise.
pub fn simulate_dubin(cfg: &DubinConfig, init: &[f64], seed: u64) -> Result<Signal> {
    simulate_dubin_with(cfg, init, &mut rng::stream(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heading_turns_a_quarter_by_midpoint() {
        let cfg = DubinConfig::controller1();
        let th = cfg.headings();
        assert!((th[25] - th[0] - PI / 2.0).abs() < 1e-12);
        assert!((th[50] - th[0]).abs() < 1e-12);
    }

    #[test]
    fn first_step_constant_speed() {
        let mut cfg = DubinConfig::controller1()
            .with_velocity(Velocity::Constant { v: 1.0 })
            .with_noise_std(0.0);
        cfg.init_box = InputBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let s = simulate_dubin(&cfg, &[0.0, 0.0], 3).unwrap();
        let th1 = 0.1 * PI + cfg.omega(1) * 0.1;
        assert!((s.sample(1)[0] - 0.1 * th1.cos()).abs() < 1e-15);
        assert!((s.sample(1)[1] - 0.1 * th1.sin()).abs() < 1e-15);
        assert_eq!(s.len(), 51);
    }

    #[test]
    fn deterministic_and_checked() {
        let cfg = DubinConfig::controller2();
        assert_eq!(
            simulate_dubin(&cfg, &[-0.5, -0.2], 9).unwrap(),
            simulate_dubin(&cfg, &[-0.5, -0.2], 9).unwrap()
        );
        assert!(simulate_dubin(&cfg, &[0.5, -0.2], 9).is_err());
    }
}
