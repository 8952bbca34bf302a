//! Outbreak forecasting with the incidence-vs-cumulative-cases (ICC) curve.
//!
//! * [`timeseries`]: weekly counts, running totals, season segmentation.
//! * [`icc`]: parabola and logistic fits of the two-parameter growth model.
//! * [`predictive`]: truncated-Poisson predictive law and rolling forecasts.
//! * [`bayes`]: latent-count posterior, reflected Metropolis sampling,
//!   posterior predictive densities.
//! * [`diagnostics`]: split R̂, Geweke Z, autocorrelation ESS.
//! * [`eval`]: RMSE, absolute-error distributions, log scores, lagged
//!   Spearman correlation.
//! * [`seir`]: two-strain host–vector ODE model for synthetic outbreaks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod icc;
pub mod predictive;
pub mod seir;
pub mod timeseries;

pub use error::{Error, Result};
