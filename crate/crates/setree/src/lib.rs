//! Structural-entropy graph clustering.
//!
//! The crate has two halves that meet in the middle:
//!
//! - **Discrete:** coding trees over weighted graphs, the structural
//!   information they encode, brute-force and greedy tree construction, and
//!   the classic volume/cut/conductance machinery ([`graph`], [`entropy`]).
//! - **Differentiable:** soft level-by-level assignments whose structural
//!   information is a smooth function of network parameters, optimized with
//!   a small reverse-mode autodiff engine over embeddings that live in the
//!   Lorentz model of hyperbolic space ([`autodiff`], [`lorentz`], [`soft`],
//!   [`net`], [`train`]).
//!
//! Trained soft trees are hardened back into discrete partitions
//! ([`decode`]), scored ([`metrics`]), and shipped around as JSON/CSV
//! ([`io`]). The `examples/` directory walks each capability end to end.

pub mod autodiff;
pub mod check;
pub mod decode;
pub mod entropy;
pub mod error;
pub mod graph;
pub mod io;
pub mod lorentz;
pub mod metrics;
pub mod net;
pub mod soft;
pub mod train;

pub use error::{Error, Result};
