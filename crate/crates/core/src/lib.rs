//! Per-calendar-month bivariate Gaussian models linking event counts to
//! temperature, and the attribution of observed counts (and their costs)
//! between warming and natural variability.
//!
//! The pipeline is:
//!
//! 1. [`ingest`]: parse event and temperature files into aligned
//!    [`ingest::MonthlyObservation`] series and a counterfactual
//!    [`ingest::MonthlyBaseline`].
//! 2. [`stats`]: fit one [`stats::BivariateParams`] per calendar month and
//!    derive the conditional model `P(N|T)` with mean `a + b·T`.
//! 3. [`attribution`]: expected-increase attribution (Scheme A), the exact
//!    density-ratio split of observed counts (Scheme B), their blend
//!    (Scheme C), sensitivities and cost projections.
//! 4. [`simulate`]: synthetic climates and Monte Carlo oracles for the
//!    attribution identities.

pub mod attribution;
pub mod ingest;
pub mod month;
pub mod simulate;
pub mod stats;
pub mod units;

pub use month::Month;
pub use units::{TempUnit, Temperature};
