//! Distributed Nadaraya-Watson smoothing with grid point approximation.
//!
//! Workers hold shards of a large sample and reduce them to additive kernel
//! moments. The coordinator assembles those moments into the exact global
//! estimator at a fixed set of grid points once, during training; afterwards
//! any query is answered by interpolating the cached grid values with no
//! further communication.
//!
//! Modules:
//!
//! - [`kernels`]: compact polynomial kernels and their moments.
//! - [`moments`]: local moment statistics, merging, NW and one-shot estimates.
//! - [`gpa`]: grids, fitted grid models, linear / Lagrange / simplex
//!   interpolation, interpolation-order selection and the model file format.
//! - [`bandwidth`]: leave-one-out CV, the one-shot and pilot selectors, and
//!   the AMISE-optimal reference bandwidth.
//! - [`cluster`]: partitions, a simulated worker/coordinator cluster and its
//!   communication ledger.
//! - [`synth`]: simulation settings, bias/variance oracles and error metrics.
//! - [`bench`]: replicated experiments that produce the comparison tables.

pub mod bandwidth;
pub mod bench;
pub mod cluster;
pub mod error;
pub mod gpa;
pub mod kernels;
pub mod moments;
pub mod numeric;
pub mod synth;

pub use error::{GpaError, Result};
pub use kernels::KernelSpec;
pub use moments::{Estimate, MomentStats, Sample};
