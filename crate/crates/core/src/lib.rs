//! Lattice-coding primitives for secret-key generation from correlated
//! Gaussian sources: exact lattice algebra, discrete Gaussian sampling,
//! flatness factors and smoothing parameters, channel-resolvability
//! experiments, Construction-A nested chains, and the one-round
//! quantize/reconcile/extract protocol.

// `!(x > 0.0)` guards reject NaN, which `x <= 0.0` would accept; index loops
// in the numerical kernels mirror the matrix notation they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod chain;
pub mod code;
pub mod error;
pub mod flatness;
pub mod gauss;
pub mod lattice;
pub mod protocol;
pub mod quadrature;
pub mod resolvability;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{CosetTable, FundamentalRegion, Lattice, Reduction, RegionKind};
