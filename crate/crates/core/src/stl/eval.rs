//! Boolean and quantitative (robust) semantics.
//!
//! Evaluation is bottom-up over the whole signal. Each subformula yields a trace that
//! is defined on a prefix of the sample indices: bounded temporal operators shorten the
//! prefix by the width of their window, unbounded ones look to the end of whatever their
//! children define and mark the result as horizon-truncated.

use super::{Formula, Predicate};
use crate::signals::Signal;
use crate::{Error, Result};

/// Robustness value at one time index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Robustness {
    pub value: f64,
    /// An unbounded operator was cut off at the end of the signal.
    pub horizon_truncated: bool,
}

/// Boolean and robust verdicts together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub satisfied: bool,
    pub robustness: f64,
    pub horizon_truncated: bool,
}

trait Domain: Copy {
    const TOP: Self;
    const BOTTOM: Self;
    fn atom(p: &Predicate, y: &[f64]) -> Self;
    fn neg(self) -> Self;
    fn and(self, other: Self) -> Self;
    fn or(self, other: Self) -> Self;
}

impl Domain for f64 {
    const TOP: f64 = f64::INFINITY;
    const BOTTOM: f64 = f64::NEG_INFINITY;

    fn atom(p: &Predicate, y: &[f64]) -> f64 {
        p.margin(y)
    }
    fn neg(self) -> f64 {
        -self
    }
    fn and(self, other: f64) -> f64 {
        self.min(other)
    }
    fn or(self, other: f64) -> f64 {
        self.max(other)
    }
}

impl Domain for bool {
    const TOP: bool = true;
    const BOTTOM: bool = false;

    fn atom(p: &Predicate, y: &[f64]) -> bool {
        p.holds(y)
    }
    fn neg(self) -> bool {
        !self
    }
    fn and(self, other: bool) -> bool {
        self && other
    }
    fn or(self, other: bool) -> bool {
        self || other
    }
}

struct Trace<D> {
    values: Vec<D>,
    truncated: bool,
}

fn check_dims(sig: &Signal, phi: &Formula) -> Result<()> {
    match phi.max_dim() {
        Some(dim) if dim >= sig.dim() => Err(Error::DimensionOutOfRange {
            dim,
            signal_dim: sig.dim(),
        }),
        _ => Ok(()),
    }
}

fn trace<D: Domain>(sig: &Signal, phi: &Formula) -> Trace<D> {
    let n = sig.len();
    let dt = sig.grid().dt;
    match phi {
        Formula::True => Trace { values: vec![D::TOP; n], truncated: false },
        Formula::False => Trace { values: vec![D::BOTTOM; n], truncated: false },
        Formula::Pred(p) => Trace {
            values: sig.samples().map(|y| D::atom(p, y)).collect(),
            truncated: false,
        },
        Formula::Not(a) => {
            let mut t = trace::<D>(sig, a);
            t.values.iter_mut().for_each(|v| *v = v.neg());
            t
        }
        Formula::And(a, b) => combine(trace(sig, a), trace(sig, b), D::and),
        Formula::Or(a, b) => combine(trace(sig, a), trace(sig, b), D::or),
        Formula::Eventually(i, a) => window(trace(sig, a), i.offsets(dt), D::BOTTOM, D::or),
        Formula::Always(i, a) => window(trace(sig, a), i.offsets(dt), D::TOP, D::and),
        Formula::Until(i, a, b) => until(trace(sig, a), trace(sig, b), i.offsets(dt), false),
        Formula::Release(i, a, b) => until(trace(sig, a), trace(sig, b), i.offsets(dt), true),
    }
}

fn combine<D: Domain>(a: Trace<D>, b: Trace<D>, op: fn(D, D) -> D) -> Trace<D> {
    Trace {
        values: a.values.iter().zip(&b.values).map(|(&x, &y)| op(x, y)).collect(),
        truncated: a.truncated || b.truncated,
    }
}

/// `F`/`G`: fold `op` over the samples `tau + lo ..= tau + hi`.
fn window<D: Domain>(child: Trace<D>, (lo, hi): (usize, Option<usize>), unit: D, op: fn(D, D) -> D) -> Trace<D> {
    let c = &child.values;
    let len = c.len();
    match hi {
        Some(hi) if lo > hi => Trace { values: vec![unit; len], truncated: child.truncated },
        Some(hi) => {
            let defined = len.saturating_sub(hi);
            let values = (0..defined)
                .map(|tau| c[tau + lo..=tau + hi].iter().fold(unit, |acc, &v| op(acc, v)))
                .collect();
            Trace { values, truncated: child.truncated }
        }
        None => {
            let defined = len.saturating_sub(lo);
            let mut suffix = vec![unit; len + 1];
            for k in (0..len).rev() {
                suffix[k] = op(c[k], suffix[k + 1]);
            }
            let values = (0..defined).map(|tau| suffix[tau + lo]).collect();
            Trace { values, truncated: true }
        }
    }
}

/// Until (or, with `dual`, release) with the left operand required on the open
/// interval strictly between `tau` and the witness index.
fn until<D: Domain>(a: Trace<D>, b: Trace<D>, (lo, hi): (usize, Option<usize>), dual: bool) -> Trace<D> {
    let (outer_unit, outer, inner_unit, inner): (D, fn(D, D) -> D, D, fn(D, D) -> D) =
        if dual { (D::TOP, D::and, D::BOTTOM, D::or) } else { (D::BOTTOM, D::or, D::TOP, D::and) };
    let truncated = a.truncated || b.truncated || hi.is_none();
    let (la, lb) = (a.values.len(), b.values.len());
    if matches!(hi, Some(hi) if lo > hi) {
        return Trace { values: vec![outer_unit; lb], truncated };
    }
    // The last offset that must be reachable for `tau` to be defined.
    let reach = hi.unwrap_or(lo);
    let mut defined = lb.saturating_sub(reach);
    if reach >= 2 {
        defined = defined.min((la + 1).saturating_sub(reach));
    }
    let values = (0..defined)
        .map(|tau| {
            let end = match hi {
                Some(hi) => tau + hi,
                None => (lb - 1).min(la.max(tau + 1)),
            };
            let mut acc = outer_unit;
            let mut run = inner_unit;
            for k in tau..=end {
                if k >= tau + 2 {
                    run = inner(run, a.values[k - 1]);
                }
                if k >= tau + lo {
                    acc = outer(acc, inner(b.values[k], run));
                }
            }
            acc
        })
        .collect();
    Trace { values, truncated }
}

fn at<D: Domain>(sig: &Signal, tau: usize, phi: &Formula) -> Result<(D, bool)> {
    check_dims(sig, phi)?;
    let t = trace::<D>(sig, phi);
    match t.values.get(tau) {
        Some(&v) => Ok((v, t.truncated)),
        None => Err(Error::InsufficientHorizon { tau, len: sig.len() }),
    }
}

/// Robust semantics at sample index `tau`.
pub fn robustness(sig: &Signal, tau: usize, phi: &Formula) -> Result<Robustness> {
    let (value, horizon_truncated) = at::<f64>(sig, tau, phi)?;
    Ok(Robustness { value, horizon_truncated })
}

/// Boolean semantics at sample index `tau`.
pub fn satisfies(sig: &Signal, tau: usize, phi: &Formula) -> Result<bool> {
    at::<bool>(sig, tau, phi).map(|(v, _)| v)
}

pub fn evaluate(sig: &Signal, tau: usize, phi: &Formula) -> Result<Evaluation> {
    let (satisfied, _) = at::<bool>(sig, tau, phi)?;
    let r = robustness(sig, tau, phi)?;
    Ok(Evaluation {
        satisfied,
        robustness: r.value,
        horizon_truncated: r.horizon_truncated,
    })
}

/// Robustness at every index where the formula is defined.
pub fn robustness_trace(sig: &Signal, phi: &Formula) -> Result<Vec<f64>> {
    check_dims(sig, phi)?;
    Ok(trace::<f64>(sig, phi).values)
}

/// Negation normal form: negations pushed onto predicates and constants.
pub fn pnf(phi: &Formula) -> Formula {
    push(phi, false)
}

fn push(phi: &Formula, neg: bool) -> Formula {
    let bx = |f: Formula| Box::new(f);
    match (phi, neg) {
        (Formula::True, false) | (Formula::False, true) => Formula::True,
        (Formula::True, true) | (Formula::False, false) => Formula::False,
        (Formula::Pred(p), false) => Formula::Pred(p.clone()),
        (Formula::Pred(p), true) => Formula::Pred(p.negated()),
        (Formula::Not(a), _) => push(a, !neg),
        (Formula::And(a, b), false) => Formula::And(bx(push(a, false)), bx(push(b, false))),
        (Formula::And(a, b), true) => Formula::Or(bx(push(a, true)), bx(push(b, true))),
        (Formula::Or(a, b), false) => Formula::Or(bx(push(a, false)), bx(push(b, false))),
        (Formula::Or(a, b), true) => Formula::And(bx(push(a, true)), bx(push(b, true))),
        (Formula::Eventually(i, a), false) => Formula::Eventually(*i, bx(push(a, false))),
        (Formula::Eventually(i, a), true) => Formula::Always(*i, bx(push(a, true))),
        (Formula::Always(i, a), false) => Formula::Always(*i, bx(push(a, false))),
        (Formula::Always(i, a), true) => Formula::Eventually(*i, bx(push(a, true))),
        (Formula::Until(i, a, b), false) => Formula::Until(*i, bx(push(a, false)), bx(push(b, false))),
        (Formula::Until(i, a, b), true) => Formula::Release(*i, bx(push(a, true)), bx(push(b, true))),
        (Formula::Release(i, a, b), false) => Formula::Release(*i, bx(push(a, false)), bx(push(b, false))),
        (Formula::Release(i, a, b), true) => Formula::Until(*i, bx(push(a, true)), bx(push(b, true))),
    }
}
