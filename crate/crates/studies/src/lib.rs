//! Case studies, simulation sweeps and comparisons built on `npp-core`.

pub mod cases;
pub mod compare;
pub mod method;
pub mod rmse;
pub mod sweep;
pub mod table;
