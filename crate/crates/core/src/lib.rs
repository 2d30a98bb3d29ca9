//! Normalized power prior (NPP) analysis for borrowing historical data.
//!
//! The crate is organised bottom-up:
//!
//! * [`numkit`]: special functions, quadrature, interval optimisation,
//!   random variates and HPD intervals.
//! * [`models`]: sufficient-statistic containers, initial priors and the
//!   compatibility statistic.
//! * [`npp`]: exact conjugate NPP posteriors for the Bernoulli, multinomial
//!   and normal linear families.
//! * [`jpp`]: joint power prior comparators under explicit likelihood forms.
//! * [`scalefactor`]: path-sampling estimation of `log C(delta)`.
//! * [`sampler`]: Metropolis-Hastings-within-Gibbs sampling over `(theta, delta)`.

pub mod error;
pub mod jpp;
pub mod models;
pub mod npp;
pub mod numkit;
pub mod sampler;
pub mod scalefactor;

pub use error::{Error, Result};
