use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{SimulationConfig, Support};
use crate::error::Result;
use crate::math;
use crate::panel::PanelDataset;
use crate::rng::substream;

/// Substream identifiers, one per stochastic component.
mod stream {
    pub const ALPHA: u64 = 1;
    pub const RHO_EPS: u64 = 2;
    pub const ETA: u64 = 3;
    pub const RHO_G: u64 = 4;
    pub const G_INNOVATION: u64 = 5;
    pub const GAMMA: u64 = 6;
    pub const A_LOADING: u64 = 7;
    pub const TAU: u64 = 8;
    pub const RHO_Q: u64 = 9;
    pub const NU: u64 = 10;
    pub const ZETA: u64 = 11;
    pub const OMEGA: u64 = 12;
    pub const LAMBDA: u64 = 13;
    pub const X_NOISE: u64 = 14;
}

/// Realised latent quantities of one simulated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// `(beta_l1, beta_f1, beta_f2)`.
    pub coefficients: [f64; 3],
    /// True regressor factors, stacked `(N*T) x 2` in panel row order.
    pub factors: DMatrix<f64>,
    /// Error factors `g`, `T x 2`.
    pub error_factors: DMatrix<f64>,
    /// Error-factor loadings `gamma`, `N x 2`.
    pub error_loadings: DMatrix<f64>,
    /// `gamma_i' g_t`, `N x T`.
    pub interactive: DMatrix<f64>,
    /// Idiosyncratic errors `eps`, `N x T`.
    pub idiosyncratic: DMatrix<f64>,
    /// Regressor loadings `lambda`, `p x 2`.
    pub x_loadings: DMatrix<f64>,
    pub alpha: Vec<f64>,
    pub rho_eps: f64,
    pub rho_g: [f64; 2],
    pub rho_q: f64,
}

impl Truth {
    pub fn summary(&self) -> TruthSummary {
        TruthSummary {
            coefficients: self.coefficients,
            rho_eps: self.rho_eps,
            rho_g: self.rho_g,
            rho_q: self.rho_q,
            alpha: self.alpha.clone(),
        }
    }
}

/// Scalar draws of a [`Truth`] for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub coefficients: [f64; 3],
    pub rho_eps: f64,
    pub rho_g: [f64; 2],
    pub rho_q: f64,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub data: PanelDataset,
    pub truth: Truth,
}

fn uniform(rng: &mut ChaCha8Rng, s: Support) -> f64 {
    s.low + (s.high - s.low) * rng.random::<f64>()
}

fn normal(rng: &mut ChaCha8Rng, variance: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    math::sqrt(variance) * z
}

/// Draws replication `rep_index` of the process in `config`.
///
/// The first `burn_in` simulated periods after the zero initial condition are
/// discarded; the panel holds the following `config.t` periods.
pub fn generate_panel(config: &SimulationConfig, rep_index: usize) -> Result<SimulatedPanel> {
    config.validate()?;
    let (n, t, p) = (config.n, config.t, config.n_regressors);
    let burn = config.burn_in;
    // simulated periods 1..=total after the initial period 0
    let total = burn + t;
    let rep = rep_index as u64;
    let rng = |component| substream(config.seed, rep, component);

    // replication-level AR coefficients
    let rho_eps = uniform(&mut rng(stream::RHO_EPS), config.rho_support);
    let mut rho_rng = rng(stream::RHO_G);
    let rho_g = [
        uniform(&mut rho_rng, config.rho_support),
        uniform(&mut rho_rng, config.rho_support),
    ];
    let rho_q = uniform(&mut rng(stream::RHO_Q), config.rho_support);

    // individual effects
    let mut alpha_rng = rng(stream::ALPHA);
    let alpha: Vec<f64> = (0..n)
        .map(|_| config.alpha_mean + normal(&mut alpha_rng, config.alpha_variance))
        .collect();

    // error factors g_jt over periods 0..=total
    let mut g = DMatrix::zeros(total + 1, 2);
    let mut g_rng = rng(stream::G_INNOVATION);
    for s in 1..=total {
        for j in 0..2 {
            g[(s, j)] = rho_g[j] * g[(s - 1, j)] + normal(&mut g_rng, config.g_innovation_variance);
        }
    }
    let mut gamma_rng = rng(stream::GAMMA);
    let gamma = DMatrix::from_fn(n, 2, |_, _| uniform(&mut gamma_rng, config.loading_support));

    // level terms h_kt
    let mut h = DMatrix::zeros(total + 1, 2);
    let mut tau_rng = rng(stream::TAU);
    for k in 0..2 {
        h[(0, k)] = config.h_initial[k];
    }
    for s in 1..=total {
        for k in 0..2 {
            h[(s, k)] = config.h_rho[k] * h[(s - 1, k)] + normal(&mut tau_rng, config.tau_variance);
        }
    }
    let mut a_rng = rng(stream::A_LOADING);
    let a = DMatrix::from_fn(n, 2, |_, _| uniform(&mut a_rng, config.loading_support));

    // cross-sectional SAR(1) component
    let mut nu_rng = rng(stream::NU);
    let mut q = Vec::with_capacity(n);
    let mut prev = config.q_initial;
    for _ in 0..n {
        prev = rho_q * prev + normal(&mut nu_rng, config.nu_variance);
        q.push(prev);
    }
    let mut zeta_rng = rng(stream::ZETA);
    let zeta = DMatrix::from_fn(total + 1, 2, |_, _| uniform(&mut zeta_rng, config.loading_support));

    let mut omega_rng = rng(stream::OMEGA);
    let mut eta_rng = rng(stream::ETA);
    let mut f = alloc::vec![DMatrix::<f64>::zeros(n, total + 1); 2];
    let mut eps = DMatrix::zeros(n, total + 1);
    let mut y = DMatrix::zeros(n, total + 1);
    let [b_l, b_f1, b_f2] = config.true_coefficients();
    for i in 0..n {
        for s in 1..=total {
            let common = gamma[(i, 0)] * g[(s, 0)] + gamma[(i, 1)] * g[(s, 1)];
            for k in 0..2 {
                f[k][(i, s)] = a[(i, k)] * h[(s, k)]
                    + common
                    + zeta[(s, k)] * q[i]
                    + normal(&mut omega_rng, config.omega_variance);
            }
            eps[(i, s)] = rho_eps * eps[(i, s - 1)] + normal(&mut eta_rng, config.eta_variance);
            y[(i, s)] = alpha[i]
                + b_l * y[(i, s - 1)]
                + b_f1 * f[0][(i, s)]
                + b_f2 * f[1][(i, s)]
                + common
                + eps[(i, s)];
        }
    }

    // observed regressors
    let mut lambda_rng = rng(stream::LAMBDA);
    let lambda = DMatrix::from_fn(p, 2, |_, _| uniform(&mut lambda_rng, config.x_loading_support));
    let first = burn + 1;
    let factors = DMatrix::from_fn(n * t, 2, |row, k| f[k][(row / t, first + row % t)]);
    let mut noise_rng = rng(stream::X_NOISE);
    let mut x = &factors * lambda.transpose();
    for v in x.iter_mut() {
        *v += normal(&mut noise_rng, config.x_noise_variance);
    }

    let keep = |m: &DMatrix<f64>| m.columns(first, t).into_owned();
    let y_kept = keep(&y);
    let g_kept = g.rows(first, t).into_owned();
    let interactive = &gamma * g_kept.transpose();
    let data = PanelDataset::from_matrices(y_kept, x)?;
    Ok(SimulatedPanel {
        data,
        truth: Truth {
            coefficients: config.true_coefficients(),
            factors,
            error_factors: g_kept,
            error_loadings: gamma,
            interactive,
            idiosyncratic: keep(&eps),
            x_loadings: lambda,
            alpha,
            rho_eps,
            rho_g,
            rho_q,
        },
    })
}
