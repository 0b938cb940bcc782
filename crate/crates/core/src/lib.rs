//! Key rates and protocol simulation for continuous-variable QKD with an
//! untrusted entangled source placed between Alice and Bob.
//!
//! All covariance-matrix quantities are in shot-noise units (vacuum
//! variance 1). Binning and finite-size quantities use quadrature units with
//! vacuum variance 1/2.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collective;
pub mod error;
pub mod finite_size;
pub mod gaussian;
pub mod mc;
pub mod sweep;

pub use collective::{key_rate_collective, plob_bound, CollectiveRateBreakdown};
pub use error::{Error, Result};
pub use finite_size::{
    key_rate_coherent, key_rate_coherent_asymptotic, AbortReason, CoherentOptions,
    CoherentRateBreakdown, FiniteSizeParams, PEStatistics,
};
pub use gaussian::{ProtocolParams, SymmetricLink, TwoModeCM};
