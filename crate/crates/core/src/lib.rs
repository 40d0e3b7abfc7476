//! Estimation of dynamic panel models whose regressors and errors both carry
//! common-factor structure.
//!
//! The model is
//!
//! ```text
//! Y_it = rho * Y_i,t-1 + F_it' beta + G_t' Gamma_i + eps_it,    X_it = Lambda F_it + e_it
//! ```
//!
//! where `X` is a large block of observed regressors summarised by a few
//! principal-component scores `F`, and `G_t' Gamma_i` is an interactive effect
//! recovered from first-stage residuals. Estimation alternates principal
//! components and first-difference GMM; see [`pipeline::estimate`].
//!
//! The crate is `no_std` with `alloc`. File formats, the command line and
//! parallel Monte Carlo live in the companion `dmdfm` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod factor;
pub mod gmm;
pub mod math;
pub mod panel;
pub mod pipeline;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
pub use factor::{factor_scores, pca, FactorDecomposition};
pub use gmm::{GmmEstimate, GmmProblem};
pub use panel::PanelDataset;
pub use pipeline::{estimate, forecast, DmdfmConfig, DmdfmFit};
