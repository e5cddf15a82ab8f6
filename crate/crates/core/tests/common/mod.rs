//! Independent reference implementations and random instance generators for tests.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use stochconf::signals::{Signal, TimeGrid};
use stochconf::stl::{Formula, Interval, LinearExpr, Predicate};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Window bounds in samples, mirroring how intervals map onto a grid.
fn steps(i: &Interval, dt: f64) -> (usize, Option<usize>) {
    let lo = (i.lo() / dt - 1e-9).ceil().max(0.0) as usize;
    let hi = i.is_bounded().then(|| (i.hi() / dt + 1e-9).floor().max(0.0) as usize);
    (lo, hi)
}

/// Semantics domain for the reference evaluator.
pub trait Sem: Copy {
    const TOP: Self;
    const BOT: Self;
    fn atom(p: &Predicate, y: &[f64]) -> Self;
    fn not(self) -> Self;
    fn meet(self, o: Self) -> Self;
    fn join(self, o: Self) -> Self;
}

impl Sem for f64 {
    const TOP: f64 = f64::INFINITY;
    const BOT: f64 = f64::NEG_INFINITY;
    fn atom(p: &Predicate, y: &[f64]) -> f64 {
        p.margin(y)
    }
    fn not(self) -> f64 {
        -self
    }
    fn meet(self, o: f64) -> f64 {
        if o < self { o } else { self }
    }
    fn join(self, o: f64) -> f64 {
        if o > self { o } else { self }
    }
}

impl Sem for bool {
    const TOP: bool = true;
    const BOT: bool = false;
    fn atom(p: &Predicate, y: &[f64]) -> bool {
        p.holds(y)
    }
    fn not(self) -> bool {
        !self
    }
    fn meet(self, o: bool) -> bool {
        self && o
    }
    fn join(self, o: bool) -> bool {
        self || o
    }
}

/// Direct recursive evaluation at `tau`; `None` where the signal is too short.
///
/// Written straight from the semantics: every subformula value is recomputed from
/// scratch, windows are scanned explicitly.
pub fn brute<S: Sem>(y: &Signal, tau: usize, phi: &Formula) -> Option<S> {
    let n = y.len();
    if tau >= n {
        return None;
    }
    let dt = y.grid().dt;
    match phi {
        Formula::True => Some(S::TOP),
        Formula::False => Some(S::BOT),
        Formula::Pred(p) => Some(S::atom(p, y.sample(tau))),
        Formula::Not(a) => brute::<S>(y, tau, a).map(S::not),
        Formula::And(a, b) => Some(brute::<S>(y, tau, a)?.meet(brute::<S>(y, tau, b)?)),
        Formula::Or(a, b) => Some(brute::<S>(y, tau, a)?.join(brute::<S>(y, tau, b)?)),
        Formula::Eventually(i, a) | Formula::Always(i, a) => {
            let ev = matches!(phi, Formula::Eventually(..));
            let unit = if ev { S::BOT } else { S::TOP };
            let comb = |x: S, v: S| if ev { x.join(v) } else { x.meet(v) };
            let (lo, hi) = steps(i, dt);
            match hi {
                Some(hi) if lo > hi => {
                    brute::<S>(y, tau, a)?;
                    Some(unit)
                }
                Some(hi) => {
                    let mut acc = unit;
                    for k in tau + lo..=tau + hi {
                        acc = comb(acc, brute::<S>(y, k, a)?);
                    }
                    Some(acc)
                }
                None => {
                    brute::<S>(y, tau + lo, a)?;
                    let mut acc = unit;
                    let mut k = tau + lo;
                    while let Some(v) = brute::<S>(y, k, a) {
                        acc = comb(acc, v);
                        k += 1;
                    }
                    Some(acc)
                }
            }
        }
        Formula::Until(i, a, b) | Formula::Release(i, a, b) => {
            let until = matches!(phi, Formula::Until(..));
            let (lo, hi) = steps(i, dt);
            let (outer_unit, inner_unit) = if until { (S::BOT, S::TOP) } else { (S::TOP, S::BOT) };
            let outer = |x: S, v: S| if until { x.join(v) } else { x.meet(v) };
            let inner = |x: S, v: S| if until { x.meet(v) } else { x.join(v) };
            if matches!(hi, Some(h) if lo > h) {
                brute::<S>(y, tau, b)?;
                return Some(outer_unit);
            }
            let last = hi.unwrap_or(lo);
            brute::<S>(y, tau + last, b)?;
            if last >= 2 {
                brute::<S>(y, tau + last - 1, a)?;
            }
            // A witness k needs b at k and a at every index strictly between tau and k.
            let witness = |k: usize| -> Option<S> {
                let mut run = inner_unit;
                for m in tau + 1..k {
                    run = inner(run, brute::<S>(y, m, a)?);
                }
                Some(inner(brute::<S>(y, k, b)?, run))
            };
            let mut acc = outer_unit;
            match hi {
                Some(hi) => {
                    for k in tau + lo..=tau + hi {
                        acc = outer(acc, witness(k)?);
                    }
                }
                None => {
                    let mut k = tau + lo;
                    while let Some(w) = witness(k) {
                        acc = outer(acc, w);
                        k += 1;
                    }
                }
            }
            Some(acc)
        }
    }
}

/// All monotone coupling paths from (0,0) to (n-1,n-1); cheapest maximum cost.
pub fn skorokhod_enumerate(y1: &Signal, y2: &Signal) -> f64 {
    let n = y1.len();
    let dt = y1.grid().dt;
    let cost = |i: usize, j: usize| {
        let d: f64 = y1
            .sample(i)
            .iter()
            .zip(y2.sample(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        d.max((i as f64 - j as f64).abs() * dt)
    };
    fn walk(i: usize, j: usize, n: usize, worst: f64, cost: &dyn Fn(usize, usize) -> f64, best: &mut f64) {
        let worst = worst.max(cost(i, j));
        if worst >= *best {
            return;
        }
        if i == n - 1 && j == n - 1 {
            *best = worst;
            return;
        }
        if i + 1 < n {
            walk(i + 1, j, n, worst, cost, best);
        }
        if j + 1 < n {
            walk(i, j + 1, n, worst, cost, best);
        }
        if i + 1 < n && j + 1 < n {
            walk(i + 1, j + 1, n, worst, cost, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(0, 0, n, 0.0, &cost, &mut best);
    best
}

/// Signal with values on a half-integer lattice so predicate boundaries are hit exactly.
pub fn lattice_signal<R: Rng>(r: &mut R, len: usize, dim: usize, dt: f64) -> Signal {
    let values = (0..len * dim).map(|_| r.random_range(-4..=4) as f64 * 0.5).collect();
    Signal::new(TimeGrid::new(0.0, dt, len).unwrap(), dim, values).unwrap()
}

pub fn uniform_signal<R: Rng>(r: &mut R, len: usize, dim: usize, dt: f64, scale: f64) -> Signal {
    let values = (0..len * dim).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect();
    Signal::new(TimeGrid::new(0.0, dt, len).unwrap(), dim, values).unwrap()
}

pub fn random_predicate<R: Rng>(r: &mut R, dim: usize) -> Predicate {
    let d = r.random_range(0..dim);
    let c = r.random_range(-3..=3) as f64 * 0.5;
    match r.random_range(0..5) {
        0 => Predicate::linear(LinearExpr::new([(d, 1.0)], -c), false).unwrap(),
        1 => Predicate::linear(LinearExpr::new([(d, -1.0)], c), r.random()).unwrap(),
        2 if dim > 1 => {
            let e = (d + 1) % dim;
            Predicate::linear(LinearExpr::new([(d, 1.0), (e, -2.0)], c), r.random()).unwrap()
        }
        3 => Predicate::abs_bound(LinearExpr::var(d), c.abs() + 0.5, r.random(), r.random()).unwrap(),
        _ => {
            let lo = r.random_range(-3..=1) as f64 * 0.5;
            let p = Predicate::in_box(vec![(d, lo, lo + 1.0)]).unwrap();
            if r.random() { p.negated() } else { p }
        }
    }
}

fn random_interval<R: Rng>(r: &mut R, dt: f64) -> Interval {
    let lo = r.random_range(0..=2) as f64;
    match r.random_range(0..6) {
        0 => Interval::unbounded(),
        1 => Interval::new(lo * dt, f64::INFINITY).unwrap(),
        2 => Interval::new(0.3 * dt, 0.7 * dt).unwrap(),
        _ => Interval::new(lo * dt, (lo + r.random_range(0..=3) as f64) * dt).unwrap(),
    }
}

/// Random formula of depth at most `depth`.
pub fn random_formula<R: Rng>(r: &mut R, depth: usize, dim: usize, dt: f64) -> Formula {
    if depth == 0 {
        return match r.random_range(0..12) {
            0 => Formula::True,
            1 => Formula::False,
            _ => Formula::Pred(random_predicate(r, dim)),
        };
    }
    let sub = |r: &mut R| {
        let d = r.random_range(0..depth);
        random_formula(r, d, dim, dt)
    };
    match r.random_range(0..9) {
        0 => Formula::Pred(random_predicate(r, dim)),
        1 => Formula::not(sub(r)),
        2 => Formula::and(sub(r), sub(r)),
        3 => Formula::or(sub(r), sub(r)),
        4 => Formula::eventually(random_interval(r, dt), sub(r)),
        5 => Formula::always(random_interval(r, dt), sub(r)),
        6 | 7 => Formula::until(random_interval(r, dt), sub(r), sub(r)),
        _ => Formula::release(random_interval(r, dt), sub(r), sub(r)),
    }
}

/// Largest discrete slope of a signal.
pub fn slope(y: &Signal) -> f64 {
    let dt = y.grid().dt;
    (1..y.len())
        .map(|k| {
            y.sample(k)
                .iter()
                .zip(y.sample(k - 1))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                / dt
        })
        .fold(0.0, f64::max)
}

/// Scalar pair with `d_sup(y1, y2) = |u| W`, `W ~ Uniform[0, 1]` fixed by `(seed, index)`.
pub fn scaled_uniform_pair(u: &[f64], seed: u64, index: u64) -> stochconf::Result<stochconf::signals::TrajectoryPair> {
    let w: f64 = stochconf::rng::stream(seed, index).random();
    let g = TimeGrid::new(0.0, 1.0, 1)?;
    let y1 = Signal::scalar(g, &[u[0].abs() * w])?;
    let y2 = Signal::scalar(g, &[0.0])?;
    stochconf::signals::TrajectoryPair::new(index, y1, y2, Some(u.to_vec()))
}

/// The `W` drawn by [`scaled_uniform_pair`].
pub fn scaled_uniform_weight(seed: u64, index: u64) -> f64 {
    stochconf::rng::stream(seed, index).random()
}
