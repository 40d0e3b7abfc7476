//! Synthetic panels from the reference data-generating process, the Monte
//! Carlo bias/RMSE harness and the rolling forecast experiment.
//!
//! Response:
//!
//! ```text
//! y_it = alpha_i + b_l y_i,t-1 + b_f1 f_1it + b_f2 f_2it + gamma_i1 g_1t + gamma_i2 g_2t + eps_it
//! eps_it = rho_eps eps_i,t-1 + eta_it,             eps_i0 = 0
//! g_jt   = rho_j g_j,t-1 + u_jt,                  g_j0 = 0
//! ```
//!
//! Regressor factors:
//!
//! ```text
//! f_kit = a_ki h_kt + gamma_i1 g_1t + gamma_i2 g_2t + zeta_kt q_i + omega_kit
//! h_kt  = rho_kh h_k,t-1 + tau_kt
//! q_i   = rho_q q_i-1 + nu_i,                     q_0 = 0.1
//! ```
//!
//! Observed regressors are `x_itj = sum_k f_kit lambda_jk + noise`. The AR
//! coefficients `rho_eps`, `rho_j` and `rho_q` are drawn once per replication.

mod dgp;
mod forecast_experiment;
mod monte_carlo;

pub use dgp::{generate_panel, SimulatedPanel, Truth, TruthSummary};
pub use forecast_experiment::{run_forecast_experiment, ForecastTable};
pub use monte_carlo::{
    aggregate_cell, cell_grid, run_monte_carlo, run_replication, DmdfmEstimator, Estimator, McCell,
    McReport, ReplicationOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval for uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub low: f64,
    pub high: f64,
}

impl Support {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub const fn point(value: f64) -> Self {
        Self::new(value, value)
    }
}

impl Default for Support {
    fn default() -> Self {
        Self::new(0.05, 0.95)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n: usize,
    pub t: usize,
    pub reps: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub true_beta_l1: f64,
    pub true_beta_f1: f64,
    pub true_beta_f2: f64,
    pub alpha_mean: f64,
    pub alpha_variance: f64,
    /// Support of `rho_eps`, `rho_1`, `rho_2` and `rho_q`.
    pub rho_support: Support,
    /// Support of `gamma`, `a` and `zeta`.
    pub loading_support: Support,
    /// Variance of `eta`.
    pub eta_variance: f64,
    /// Variance of `u`.
    pub g_innovation_variance: f64,
    pub h_rho: [f64; 2],
    pub h_initial: [f64; 2],
    /// Variance of `tau`.
    pub tau_variance: f64,
    pub q_initial: f64,
    /// Variance of `nu`.
    pub nu_variance: f64,
    pub omega_variance: f64,
    /// Number of observed regressors.
    pub n_regressors: usize,
    /// Support of the regressor loadings `lambda`.
    pub x_loading_support: Support,
    pub x_noise_variance: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 100,
            t: 10,
            reps: 200,
            seed: 0,
            burn_in: 15,
            true_beta_l1: 0.6,
            true_beta_f1: 0.8,
            true_beta_f2: 1.0,
            alpha_mean: 1.0,
            alpha_variance: 2.0,
            rho_support: Support::default(),
            loading_support: Support::default(),
            eta_variance: 1.0,
            g_innovation_variance: 1.0,
            h_rho: [0.4, 0.5],
            h_initial: [0.2, 0.3],
            tau_variance: 1.0,
            q_initial: 0.1,
            nu_variance: 1.0,
            omega_variance: 0.25,
            n_regressors: 10,
            x_loading_support: Support::default(),
            x_noise_variance: 0.25,
        }
    }
}

impl SimulationConfig {
    /// Default process with the given size.
    pub fn sized(n: usize, t: usize, reps: usize, seed: u64) -> Self {
        Self {
            n,
            t,
            reps,
            seed,
            ..Self::default()
        }
    }

    /// No idiosyncratic noise, no error factors and noiseless regressors:
    /// `y` is an exact function of its lag, the factors and `alpha`.
    pub fn noiseless(self) -> Self {
        Self {
            eta_variance: 0.0,
            g_innovation_variance: 0.0,
            x_noise_variance: 0.0,
            ..self
        }
    }

    /// True `(beta_l1, beta_f1, beta_f2)`.
    pub fn true_coefficients(&self) -> [f64; 3] {
        [self.true_beta_l1, self.true_beta_f1, self.true_beta_f2]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if self.t < 3 {
            return bad("t must be at least 3");
        }
        if self.n_regressors == 0 {
            return bad("n_regressors must be at least 1");
        }
        let variances = [
            self.alpha_variance,
            self.eta_variance,
            self.g_innovation_variance,
            self.tau_variance,
            self.nu_variance,
            self.omega_variance,
            self.x_noise_variance,
        ];
        if variances.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("variances must be finite and non-negative");
        }
        for s in [self.rho_support, self.loading_support, self.x_loading_support] {
            if !(s.low <= s.high && s.low.is_finite() && s.high.is_finite()) {
                return bad("uniform supports need finite low <= high");
            }
        }
        Ok(())
    }
}
