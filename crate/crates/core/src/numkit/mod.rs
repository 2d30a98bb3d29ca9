//! Deterministic numerical kernel with no statistical domain knowledge.

mod hpd;
mod optimize;
mod quadrature;
mod random;
mod special;

pub use hpd::{equal_tailed_interval, hpd_interval, mean_and_sd, sorted_copy};
pub use optimize::{argmax_on_interval, argmax_with_scan, Maximum, MIN_SCAN_POINTS};
pub use quadrature::{integrate_unit, log_sum_exp, NodeValues, PanelSpacing, QuadratureRule, UnitIntegral};
pub use random::{sample_distribution, Distribution, RngStream, Samples, StreamRng};
pub use special::{ln_beta, ln_gamma, log_beta, log_gamma};

pub(crate) use random::{draw_beta, draw_dirichlet, draw_gamma, draw_standard_normal};
