//! Minimizing-movements solvers for gradient flows in metric spaces.
//!
//! The crate is organized around a backend trait ([`metric::MetricBackend`])
//! that supplies a distance, an energy, its metric slope, and the inner
//! proximal solver. Two backends are provided: finite-dimensional normed
//! spaces ([`banach`]) and one-dimensional Wasserstein spaces in quantile
//! coordinates ([`wasserstein`]). On top of them sit the incremental solver
//! and its diagnostics ([`engine`]) and a long-time laboratory for
//! omega-limits, rest points, attractors and decay rates ([`attractor`]).

pub mod attractor;
pub mod banach;
pub mod engine;
pub mod error;
pub mod metric;
pub mod wasserstein;

pub use error::{FlowError, ProxFailure, Result};
pub use metric::{MetricBackend, Partition, ProxOpts, ProxResult, Trajectory};
