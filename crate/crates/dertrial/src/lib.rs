//! Monte Carlo study of two ways to estimate a dose-response curve from a
//! randomized trial when the treatment works through a continuous exposure
//! that shares unobserved noise with the outcome.
//!
//! The *direct* estimator fits a binary-response model of outcome on
//! assigned dose and reads the curve off the coefficients. The *sequential*
//! estimator first regresses exposure on dose, then the outcome on exposure
//! — either naively (confounded) or with a control-function adjustment that
//! uses the randomized dose as an instrument — and converts the conditional
//! coefficients into the same marginal dose scale. The harness simulates
//! trials, runs all estimators on identical data, and aggregates bias,
//! variance, and MSE comparisons with Monte Carlo standard errors.
//!
//! Everything is deterministic given a master seed: each replication draws
//! from its own counter-mode stream, so results are independent of thread
//! count and schedule.

pub mod cli;
pub mod dgp;
pub mod estimators;
pub mod harness;
pub mod numerics;
pub mod regression;
