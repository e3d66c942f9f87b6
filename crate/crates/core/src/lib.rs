//! Stochastic approximation and SGD with explicit strong-error certificates.
//!
//! The recursion `Θ_n = Θ_{n−1} + γ_n (g(Θ_{n−1}) + D_n)` is simulated on
//! reproducible parallel ensembles, its hypotheses (drift contraction,
//! noise moments, learning-rate admissibility) are spot-checked on sample
//! sets, and the explicit Gronwall/Lyapunov bound constants are computed
//! and compared against Monte Carlo estimates of `E‖Θ_n − ϑ‖^p`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::len_without_is_empty)]

pub mod certificates;
pub mod drift;
pub mod engine;
pub mod experiment;
pub mod error;
pub mod gronwall;
pub mod linreg;
pub mod math;
pub mod rng;
pub mod schedule;

pub use error::{Error, Result};
pub use math::Point;
pub use schedule::Schedule;
