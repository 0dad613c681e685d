//! Supply planning for periodical print titles: demand reconstruction from
//! censored sales, quantile forecasts per point of sale, group-conditional
//! conformal correction, plan search and business rules.

pub mod cost;
pub mod domain;
pub mod error;
pub mod features;
pub mod gcqr;
pub mod harness;
pub mod ingest;
pub mod optimizer;
pub mod qreg;
pub mod rules;
pub mod synth;

pub use error::{Error, Result};
