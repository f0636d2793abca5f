//! Linear boundary-value problems for r-th order ODE systems with generic
//! boundary operators in Sobolev spaces `W^{n+r}_p`.
//!
//! The crate solves problems of the form
//!
//! ```text
//! y^(r)(t) + A_{r-1}(t) y^(r-1)(t) + ... + A_0(t) y(t) = f(t),   t in (a, b),
//! B y = c,
//! ```
//!
//! where `B` is any bounded operator from `(W^{n+r}_p)^m` into `C^{rm}` given
//! in its canonical form (derivative evaluations at an anchor point plus an
//! integral against a density acting on the highest derivative), or as a
//! multipoint condition. On top of the solver it provides:
//!
//! * well-posedness tests through the characteristic matrix ([`bvp`]),
//! * checkers for parameter-continuity conditions and convergence
//!   experiments over sampled parameter families ([`limits`]),
//! * the constructive approximation pipeline that replaces a generic problem
//!   by multipoint problems with polynomial coefficients ([`approx`]).
//!
//! All scalars are complex. Functions are sampled on uniform grids together
//! with a stack of derivatives ([`grid::GridFunction`]); integrals use
//! composite Simpson quadrature and Cauchy problems are integrated with
//! fixed-step RK4, so both carry `O(N^-4)` discretization error.
//!
//! Everything is immutable after construction and `Send + Sync`; independent
//! solves can be run from parallel threads.

pub mod approx;
pub mod boundary;
pub mod bvp;
mod error;
pub mod fixtures;
pub mod grid;
pub mod limits;
pub mod ode;
pub mod polynomial;
pub mod testset;

pub use error::{Error, Result};
