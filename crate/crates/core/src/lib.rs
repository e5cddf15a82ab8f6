//! Stochastic conformance testing for cyber-physical systems.
//!
//! Two stochastic systems driven by the same input produce a distribution of
//! trajectory distances `d(Y1, Y2)`. This crate estimates that distribution from
//! sampled data and answers three kinds of questions about it:
//!
//! * **Conformance**: is `Prob(d(Y1, Y2) <= eps) >= 1 - delta`? Answered with split
//!   conformal prediction ([`conformal`]), either for a known input distribution or
//!   in the worst case over a compact input set ([`worstcase`]).
//! * **Non-conformance risk**: does a tail risk measure (VaR or CVaR) of the distance
//!   exceed a threshold `r`? Answered with distribution-free confidence bounds
//!   ([`risk`]).
//! * **Transference**: given a guarantee on the STL robustness of system 1, what is
//!   implied for system 2? ([`transference`], built on the [`stl`] monitor and the
//!   signal [`metrics`].)
//!
//! Built-in stochastic system pairs for experiments live in [`systems`]; trajectory
//! data handling is in [`signals`].

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
mod error;
pub mod metrics;
pub mod quantile;
pub mod risk;
pub mod rng;
pub mod serde_ext;
pub mod signals;
pub mod stl;
pub mod systems;
pub mod transference;
pub mod worstcase;

pub use error::{Error, Result};
