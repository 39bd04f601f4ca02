//! Mixing, concentration and identification experiments for linear Gaussian
//! systems `x_{t+1} = A x_t + w_t` with declared Jordan structure.
//!
//! - [`linalg`]: dense kernel (norms, SVD, PSD square root, Lyapunov solver).
//! - [`spectral`]: systems built from Jordan blocks, invariant projections,
//!   first contractive hitting times.
//! - [`simulate`]: seeded trajectories, sub-chains and stationary draws.
//! - [`concentration`]: closed-form tail and mixing bounds and the
//!   Monte-Carlo experiments checking them.
//! - [`sysid`]: least-squares identification and its diagnostics.
//! - [`cli`]: JSON-configured command dispatch.

// validity checks are written `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod concentration;
pub mod error;
pub mod linalg;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod spectral;
pub mod sysid;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
