//! Higher-moment spillover analysis.
//!
//! The pipeline runs in four stages:
//!
//! - [`marketdata`]: price ingestion, log returns, descriptive diagnostics and
//!   factor alignment onto a trading calendar.
//! - [`gjrsk`]: GARCH-type recursions for conditional variance, skewness and
//!   kurtosis with asymmetric (leverage) terms and a Gram-Charlier innovation
//!   density, estimated by maximum likelihood.
//! - [`tvpvar`] and [`connectedness`]: a forgetting-factor Kalman TVP-VAR, its
//!   moving-average representation and the generalized variance decomposition
//!   in the time domain and over frequency bands.
//! - [`netgraph`] and [`forest`]: net-pairwise spillover networks and a
//!   random-forest regressor with Gini and permutation importance.

pub mod connectedness;
pub mod error;
pub mod forest;
pub mod gjrsk;
pub mod linalg;
pub mod marketdata;
pub mod netgraph;
pub mod optim;
pub mod stats;
pub mod tvpvar;

pub use error::{Error, Result};
