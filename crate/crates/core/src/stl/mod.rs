//! Signal temporal logic over discrete-time signals.
//!
//! Formulas are built from predicates `h(y) >= 0` with the boolean connectives and the
//! interval-annotated temporal operators until (`U`), release (`R`), eventually (`F`)
//! and always (`G`). Intervals are in seconds and are intersected with the sample grid
//! of the signal being monitored; there is no interpolation between samples.
//!
//! Predicate functions are Euclidean signed distances: a linear predicate
//! `a.y + b >= 0` is evaluated as `(a.y + b) / |a|`, so every predicate, and therefore
//! every formula, is 1-Lipschitz in the sup-norm distance between signals.
//!
//! ```
//! use stochconf::stl::{parse, robustness};
//! use stochconf::signals::{Signal, TimeGrid};
//!
//! let phi = parse("F[0,2] (x0 >= 0)").unwrap();
//! let y = Signal::scalar(TimeGrid::new(0.0, 1.0, 3).unwrap(), &[-1.0, -1.0, 1.0]).unwrap();
//! assert_eq!(robustness(&y, 0, &phi).unwrap().value, 1.0);
//! ```

mod eval;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::quantile::INDEX_SLACK;
use crate::{Error, Result};

pub use eval::{evaluate, pnf, robustness, robustness_trace, satisfies, Evaluation, Robustness};
pub use parser::parse;

/// Closed time interval `[lo, hi]` in seconds, `hi` possibly `+inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo < 0.0 || lo > hi || lo.is_infinite() {
            return Err(Error::MalformedInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    /// `[0, inf)`, the interval of an operator written without one.
    pub const fn unbounded() -> Self {
        Interval { lo: 0.0, hi: f64::INFINITY }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.hi.is_finite()
    }

    /// Sample offsets `k` with `k * dt` inside the interval: `(first, last)`, `last` is
    /// `None` when unbounded. `first > last` denotes an interval that contains no sample.
    pub fn offsets(&self, dt: f64) -> (usize, Option<usize>) {
        let first = (self.lo / dt - INDEX_SLACK).ceil().max(0.0) as usize;
        let last = self
            .is_bounded()
            .then(|| (self.hi / dt + INDEX_SLACK).floor().max(0.0) as usize);
        (first, last)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.hi.is_infinite() {
            write!(f, "[{},inf]", Num(self.lo))
        } else {
            write!(f, "[{},{}]", Num(self.lo), Num(self.hi))
        }
    }
}

/// Affine function `sum_i a_i y_i + b` with sparse, sorted, non-zero coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearExpr {
    terms: Vec<(usize, f64)>,
    offset: f64,
}

impl LinearExpr {
    pub fn new(terms: impl IntoIterator<Item = (usize, f64)>, offset: f64) -> Self {
        let mut acc = std::collections::BTreeMap::new();
        for (dim, c) in terms {
            *acc.entry(dim).or_insert(0.0) += c;
        }
        LinearExpr {
            terms: acc.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            offset,
        }
    }

    pub fn var(dim: usize) -> Self {
        LinearExpr::new([(dim, 1.0)], 0.0)
    }

    pub fn terms(&self) -> &[(usize, f64)] {
        &self.terms
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.terms.iter().fold(0.0, |acc, &(d, c)| acc + c * y[d]) + self.offset
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c * c).sum::<f64>().sqrt()
    }

    pub fn negated(&self) -> Self {
        LinearExpr {
            terms: self.terms.iter().map(|&(d, c)| (d, -c)).collect(),
            offset: -self.offset,
        }
    }

    fn max_dim(&self) -> Option<usize> {
        self.terms.last().map(|t| t.0)
    }
}

impl fmt::Display for LinearExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for &(d, c) in &self.terms {
            let (neg, mag) = (c < 0.0, c.abs());
            match (first, neg) {
                (true, true) => f.write_str("-")?,
                (true, false) => {}
                (false, true) => f.write_str(" - ")?,
                (false, false) => f.write_str(" + ")?,
            }
            if mag == 1.0 {
                write!(f, "x{d}")?;
            } else {
                write!(f, "{}*x{d}", Num(mag))?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", Num(self.offset))
        } else if self.offset != 0.0 {
            let sign = if self.offset < 0.0 { '-' } else { '+' };
            write!(f, " {sign} {}", Num(self.offset.abs()))
        } else {
            Ok(())
        }
    }
}

/// Atomic proposition `h(y) >= 0` (or `h(y) > 0` when strict).
///
/// `h` is the value returned by [`Predicate::margin`]; its sign decides satisfaction and
/// its magnitude is the predicate robustness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    /// `h(y) = (a.y + b) / |a|`.
    Linear { expr: LinearExpr, strict: bool },
    /// `h(y) = (bound - |a.y + b|) / |a|`, negated when `outside`.
    AbsBound {
        expr: LinearExpr,
        bound: f64,
        outside: bool,
        strict: bool,
    },
    /// Axis-aligned box over selected dimensions, `(dim, low, high)`;
    /// `h(y) = min_i min(y_i - low_i, high_i - y_i)`, negated (and strict) when `outside`.
    Box { bounds: Vec<(usize, f64, f64)>, outside: bool },
}

impl Predicate {
    pub fn linear(expr: LinearExpr, strict: bool) -> Result<Self> {
        if expr.is_constant() {
            return Err(Error::invalid("linear predicate needs at least one variable"));
        }
        Ok(Predicate::Linear { expr, strict })
    }

    pub fn abs_bound(expr: LinearExpr, bound: f64, outside: bool, strict: bool) -> Result<Self> {
        if expr.is_constant() || !bound.is_finite() {
            return Err(Error::invalid("abs predicate needs a variable and a finite bound"));
        }
        Ok(Predicate::AbsBound { expr, bound, outside, strict })
    }

    pub fn in_box(bounds: Vec<(usize, f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("box predicate needs at least one dimension"));
        }
        if let Some((d, lo, hi)) = bounds.iter().find(|(_, lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::invalid(format!("box bounds for x{d} must satisfy low <= high, got [{lo}, {hi}]")));
        }
        Ok(Predicate::Box { bounds, outside: false })
    }

    /// Signed margin `h(y)`.
    pub fn margin(&self, y: &[f64]) -> f64 {
        match self {
            Predicate::Linear { expr, .. } => expr.eval(y) / expr.norm(),
            Predicate::AbsBound { expr, bound, outside, .. } => {
                let inside = (bound - expr.eval(y).abs()) / expr.norm();
                if *outside {
                    -inside
                } else {
                    inside
                }
            }
            Predicate::Box { bounds, outside } => {
                let inside = bounds
                    .iter()
                    .map(|&(d, lo, hi)| (y[d] - lo).min(hi - y[d]))
                    .fold(f64::INFINITY, f64::min);
                if *outside {
                    -inside
                } else {
                    inside
                }
            }
        }
    }

    pub fn is_strict(&self) -> bool {
        match self {
            Predicate::Linear { strict, .. } | Predicate::AbsBound { strict, .. } => *strict,
            Predicate::Box { outside, .. } => *outside,
        }
    }

    pub fn holds(&self, y: &[f64]) -> bool {
        let h = self.margin(y);
        if self.is_strict() {
            h > 0.0
        } else {
            h >= 0.0
        }
    }

    /// The complementary predicate, with margin exactly `-h`.
    pub fn negated(&self) -> Predicate {
        match self {
            Predicate::Linear { expr, strict } => Predicate::Linear {
                expr: expr.negated(),
                strict: !strict,
            },
            Predicate::AbsBound { expr, bound, outside, strict } => Predicate::AbsBound {
                expr: expr.clone(),
                bound: *bound,
                outside: !outside,
                strict: !strict,
            },
            Predicate::Box { bounds, outside } => Predicate::Box {
                bounds: bounds.clone(),
                outside: !outside,
            },
        }
    }

    /// Largest signal dimension referenced.
    pub fn max_dim(&self) -> usize {
        match self {
            Predicate::Linear { expr, .. } | Predicate::AbsBound { expr, .. } => expr.max_dim().unwrap_or(0),
            Predicate::Box { bounds, .. } => bounds.iter().map(|b| b.0).max().unwrap_or(0),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Linear { expr, strict } => {
                let (ge, le) = if *strict { (">", "<") } else { (">=", "<=") };
                match expr.terms() {
                    [(d, c)] if *c == 1.0 => write!(f, "x{d} {ge} {}", Num(-expr.offset())),
                    [(d, c)] if *c == -1.0 => write!(f, "x{d} {le} {}", Num(expr.offset())),
                    _ => write!(f, "{expr} {ge} 0"),
                }
            }
            Predicate::AbsBound { expr, bound, outside, strict } => {
                let op = match (outside, strict) {
                    (false, false) => "<=",
                    (false, true) => "<",
                    (true, false) => ">=",
                    (true, true) => ">",
                };
                write!(f, "abs({expr}) {op} {}", Num(*bound))
            }
            Predicate::Box { bounds, outside } => {
                f.write_str(if *outside { "out(" } else { "in(" })?;
                for (i, (d, lo, hi)) in bounds.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "x{d}:[{},{}]", Num(*lo), Num(*hi))?;
                }
                f.write_str(")")
            }
        }
    }
}

/// STL formula tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Pred(Predicate),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
    /// Dual of until: `a R_I b == !(!a U_I !b)`. Needed to push negations through until.
    Release(Interval, Box<Formula>, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Always(Interval, Box<Formula>),
}

impl Formula {
    pub fn pred(p: Predicate) -> Self {
        Formula::Pred(p)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Formula) -> Self {
        Formula::Not(Box::new(a))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn until(i: Interval, a: Formula, b: Formula) -> Self {
        Formula::Until(i, Box::new(a), Box::new(b))
    }

    pub fn release(i: Interval, a: Formula, b: Formula) -> Self {
        Formula::Release(i, Box::new(a), Box::new(b))
    }

    pub fn eventually(i: Interval, a: Formula) -> Self {
        Formula::Eventually(i, Box::new(a))
    }

    pub fn always(i: Interval, a: Formula) -> Self {
        Formula::Always(i, Box::new(a))
    }

    /// Left-nested conjunction; `True` for an empty iterator.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Self {
        parts.into_iter().reduce(Formula::and).unwrap_or(Formula::True)
    }

    /// Largest signal dimension referenced by any predicate.
    pub fn max_dim(&self) -> Option<usize> {
        match self {
            Formula::True | Formula::False => None,
            Formula::Pred(p) => Some(p.max_dim()),
            Formula::Not(a) | Formula::Eventually(_, a) | Formula::Always(_, a) => a.max_dim(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) | Formula::Release(_, a, b) => {
                match (a.max_dim(), b.max_dim()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::False | Formula::Pred(_) => 0,
            Formula::Not(a) | Formula::Eventually(_, a) | Formula::Always(_, a) => 1 + a.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) | Formula::Release(_, a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = |f: &mut fmt::Formatter<'_>, name: &str, i: &Interval| {
            if *i == Interval::unbounded() {
                write!(f, "{name}")
            } else {
                write!(f, "{name}{i}")
            }
        };
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Pred(p) => write!(f, "({p})"),
            Formula::Not(a) => write!(f, "!{a}"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Until(i, a, b) => {
                write!(f, "({a} ")?;
                op(f, "U", i)?;
                write!(f, " {b})")
            }
            Formula::Release(i, a, b) => {
                write!(f, "({a} ")?;
                op(f, "R", i)?;
                write!(f, " {b})")
            }
            Formula::Eventually(i, a) => {
                op(f, "F", i)?;
                write!(f, " {a}")
            }
            Formula::Always(i, a) => {
                op(f, "G", i)?;
                write!(f, " {a}")
            }
        }
    }
}

/// Shortest round-trip float formatting; prints `0` for both signed zeros.
struct Num(f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0.0 {
            f.write_str("0")
        } else if self.0.is_infinite() {
            f.write_str(if self.0 > 0.0 { "inf" } else { "-inf" })
        } else {
            write!(f, "{}", self.0)
        }
    }
}
