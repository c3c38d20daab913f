//! Fluctuations of linear statistics for multi-time determinantal point
//! processes whose kernels come from banded recurrence operators.

pub mod banded;
pub mod cumulants;
pub mod dense;
pub mod dpp;
pub mod ensembles;
pub mod error;
pub mod gff;
pub mod montecarlo;
pub mod par;
pub mod poly;
pub mod quad;
pub mod stieltjes;
pub mod symbols;

pub use banded::{poly_apply, BandedMatrix};
pub use error::{Error, Result};
pub use par::Execution;
pub use poly::Polynomial;
