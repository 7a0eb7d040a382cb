//! Overshoot, undershoot and entrance Markov chains of zero-mean random walks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod increments;
pub mod kernels;
pub mod lab;
pub mod measures;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use increments::{Family, GaussComponent, IncrementSpec, LatticePmf};
pub use rng::RngStream;
pub use walk::{CrossingEvent, CycleSample, Direction, EntranceEvent, LadderSample, Simulator};
