use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{center_columns, eigen_spectrum, sorted_singular_values};
use crate::error::{Error, Result};
use crate::math;
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    VarianceContribution,
    Scree,
    Pcp1,
    Icp1,
}

/// Outcome of a factor-count rule.
///
/// `candidate_values[j]` belongs to `k = j + 1` for the variance-contribution
/// and scree rules and to `k = j` for the information criteria, which also
/// score the zero-factor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub criterion: SelectionCriterion,
    #[serde(rename = "candidates")]
    pub candidate_values: Vec<f64>,
    pub chosen_k: usize,
}

fn penalty_scale(n: usize, t: usize) -> f64 {
    let (n, t) = (n as f64, t as f64);
    (n + t) / (n * t) * math::ln(n * t / (n + t))
}

/// `PC_p1(k) = V(k) + k * sigma2 * (N+T)/(NT) * ln(NT/(N+T))`.
pub fn pcp1(k: usize, v_k: f64, sigma2_hat: f64, n: usize, t: usize) -> f64 {
    v_k + k as f64 * sigma2_hat * penalty_scale(n, t)
}

/// `IC_p1(k) = V(k) + k * (N+T)/(NT) * ln(NT/(N+T))`.
pub fn icp1(k: usize, v_k: f64, n: usize, t: usize) -> f64 {
    v_k + k as f64 * penalty_scale(n, t)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "variance threshold must lie in (0, 1], got {threshold}"
        )))
    }
}

fn check_kmax(kmax: usize, p: usize) -> Result<()> {
    if kmax == 0 {
        return Err(Error::InvalidConfig("kmax must be at least 1".into()));
    }
    if kmax > p {
        return Err(Error::KTooLarge { k: kmax, max: p });
    }
    Ok(())
}

fn cumulative_shares(spectrum: &[f64], kmax: usize) -> Vec<f64> {
    let total: f64 = spectrum.iter().sum();
    let mut acc = 0.0;
    (0..kmax)
        .map(|k| {
            if total <= 0.0 {
                return 1.0;
            }
            acc += spectrum.get(k).copied().unwrap_or(0.0);
            acc / total
        })
        .collect()
}

fn first_reaching(cumulative: &[f64], threshold: f64) -> usize {
    cumulative
        .iter()
        .position(|&c| c >= threshold * (1.0 - 1e-12))
        .map_or(cumulative.len(), |j| j + 1)
}

/// Per-period variance-contribution rule for the number of regressor factors.
///
/// Each period's `N x p` cross-section gets its own PCA; the period needing
/// the most components to reach `threshold` decides. Candidates hold, for each
/// `k`, the smallest cumulative share over periods.
pub fn select_r_regressors(
    data: &PanelDataset,
    threshold: f64,
    kmax: usize,
) -> Result<SelectionReport> {
    check_threshold(threshold)?;
    check_kmax(kmax, data.n_regressors())?;
    let mut binding = alloc::vec![f64::INFINITY; kmax];
    for t in 0..data.n_periods() {
        let cum = cumulative_shares(&eigen_spectrum(&data.x_period(t)), kmax);
        for (b, c) in binding.iter_mut().zip(cum) {
            *b = b.min(c);
        }
    }
    let chosen_k = first_reaching(&binding, threshold);
    Ok(SelectionReport {
        criterion: SelectionCriterion::VarianceContribution,
        candidate_values: binding,
        chosen_k,
    })
}

/// Variance-contribution rule on the pooled `(N*T) x p` regressor matrix.
pub fn select_r_pooled(data: &PanelDataset, threshold: f64, kmax: usize) -> Result<SelectionReport> {
    check_threshold(threshold)?;
    check_kmax(kmax, data.n_regressors())?;
    let cum = cumulative_shares(&eigen_spectrum(data.x()), kmax);
    let chosen_k = first_reaching(&cum, threshold);
    Ok(SelectionReport {
        criterion: SelectionCriterion::VarianceContribution,
        candidate_values: cum,
        chosen_k,
    })
}

/// Scree (elbow) rule on the pooled spectrum: the `k` after which the
/// eigenvalue drop `lambda_k - lambda_{k+1}` is largest. Candidates are the
/// leading eigenvalues.
pub fn select_r_scree(data: &PanelDataset, kmax: usize) -> Result<SelectionReport> {
    check_kmax(kmax, data.n_regressors())?;
    let spectrum = eigen_spectrum(data.x());
    let at = |j: usize| spectrum.get(j).copied().unwrap_or(0.0);
    let mut chosen_k = 1;
    let mut best = f64::NEG_INFINITY;
    for k in 1..=kmax {
        let drop = at(k - 1) - at(k);
        if drop > best {
            best = drop;
            chosen_k = k;
        }
    }
    Ok(SelectionReport {
        criterion: SelectionCriterion::Scree,
        candidate_values: (0..kmax).map(at).collect(),
        chosen_k,
    })
}

/// Information-criterion choice of the number of error-component factors.
///
/// `residuals` is `N x T`. For each `k` in `0..=kmax` the residual variance
/// `V(k)` of a `k`-factor fit (individual means removed) is scored; for
/// PCp1 the scale `sigma2` is `V(kmax)`.
pub fn select_s_errors(
    residuals: &DMatrix<f64>,
    kmax: usize,
    criterion: SelectionCriterion,
) -> Result<SelectionReport> {
    let (n, t) = residuals.shape();
    let max = n.min(t);
    if kmax > max {
        return Err(Error::KTooLarge { k: kmax, max });
    }
    if !matches!(criterion, SelectionCriterion::Pcp1 | SelectionCriterion::Icp1) {
        return Err(Error::InvalidConfig(format!(
            "{criterion:?} does not apply to error-component factors"
        )));
    }
    let (_, centered) = center_columns(&residuals.transpose());
    let sv = sorted_singular_values(&centered);
    let nt = (n * t) as f64;
    let v: Vec<f64> = (0..=kmax)
        .map(|k| sv.iter().skip(k).map(|s| s * s).sum::<f64>() / nt)
        .collect();
    let sigma2 = v[kmax];
    let candidate_values: Vec<f64> = v
        .iter()
        .enumerate()
        .map(|(k, &vk)| match criterion {
            SelectionCriterion::Pcp1 => pcp1(k, vk, sigma2, n, t),
            _ => icp1(k, vk, n, t),
        })
        .collect();
    let mut chosen_k = 0;
    for (k, c) in candidate_values.iter().enumerate() {
        if *c < candidate_values[chosen_k] {
            chosen_k = k;
        }
    }
    Ok(SelectionReport {
        criterion,
        candidate_values,
        chosen_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn pcp1_zero_factors_is_v0() {
        assert_eq!(pcp1(0, 0.37, 5.0, 100, 10), 0.37);
        assert_eq!(icp1(0, 0.37, 100, 10), 0.37);
    }

    #[test]
    fn criterion_formula_values() {
        // 1 + 2 * (110/1000) * ln(1000/110), evaluated independently
        let expected = 1.0 + 0.22 * (1000.0_f64 / 110.0).ln();
        assert_relative_eq!(pcp1(2, 1.0, 1.0, 100, 10), expected, epsilon = 1e-14);
        assert_relative_eq!(icp1(2, 1.0, 100, 10), expected, epsilon = 1e-14);
        assert!((expected - 1.4856).abs() < 5e-5);
    }

    #[test]
    fn pcp1_penalty_is_linear_in_sigma2() {
        let base = pcp1(3, 0.5, 1.3, 40, 8) - 0.5;
        let doubled = pcp1(3, 0.5, 2.6, 40, 8) - 0.5;
        assert_relative_eq!(doubled, 2.0 * base, epsilon = 1e-14);
    }

    #[test]
    fn criteria_strictly_increase_in_k_for_fixed_v() {
        for k in 0..6 {
            assert!(icp1(k + 1, 0.8, 50, 10) > icp1(k, 0.8, 50, 10));
            assert!(pcp1(k + 1, 0.8, 0.3, 50, 10) > pcp1(k, 0.8, 0.3, 50, 10));
        }
    }

    fn factor_panel(n: usize, t: usize, p: usize, ranks: &[usize], seed: u64) -> PanelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(n * t, p);
        for (s, &rank) in ranks.iter().enumerate() {
            let f: DMatrix<f64> = DMatrix::from_fn(n, rank, |_, _| StandardNormal.sample(&mut rng));
            let l: DMatrix<f64> = DMatrix::from_fn(p, rank, |_, _| StandardNormal.sample(&mut rng));
            let slice: DMatrix<f64> = f * l.transpose();
            for i in 0..n {
                for j in 0..p {
                    x[(i * t + s, j)] = slice[(i, j)];
                }
            }
        }
        PanelDataset::from_matrices(DMatrix::zeros(n, t), x).unwrap()
    }

    #[test]
    fn exact_rank_two_periods() {
        let panel = factor_panel(30, 4, 6, &[2, 2, 2, 2], 1);
        let rep = select_r_regressors(&panel, 0.99, 4).unwrap();
        assert_eq!(rep.chosen_k, 2);
        assert_eq!(rep.candidate_values.len(), 4);
    }

    #[test]
    fn maximum_over_periods() {
        let panel = factor_panel(30, 4, 6, &[2, 3, 2, 2], 2);
        assert_eq!(select_r_regressors(&panel, 0.99, 4).unwrap().chosen_k, 3);
    }

    #[test]
    fn r_selection_input_checks() {
        let panel = factor_panel(10, 3, 4, &[1, 1, 1], 3);
        assert_eq!(
            select_r_regressors(&panel, 0.8, 5).unwrap_err(),
            Error::KTooLarge { k: 5, max: 4 }
        );
        assert!(select_r_regressors(&panel, 0.0, 2).is_err());
        assert!(select_r_regressors(&panel, 1.5, 2).is_err());
    }

    /// Rank-`rank` regressors whose loadings are shared by every period.
    fn pooled_panel(n: usize, t: usize, p: usize, rank: usize, seed: u64) -> PanelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: DMatrix<f64> = DMatrix::from_fn(n * t, rank, |_, _| StandardNormal.sample(&mut rng));
        let l: DMatrix<f64> = DMatrix::from_fn(p, rank, |_, _| StandardNormal.sample(&mut rng));
        PanelDataset::from_matrices(DMatrix::zeros(n, t), f * l.transpose()).unwrap()
    }

    #[test]
    fn pooled_selection_on_shared_loadings() {
        let panel = pooled_panel(20, 4, 6, 2, 3);
        let rep = select_r_pooled(&panel, 0.999, 4).unwrap();
        assert_eq!(rep.chosen_k, 2);
        assert!((rep.candidate_values[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scree_picks_elbow() {
        let panel = pooled_panel(40, 3, 8, 1, 4);
        assert_eq!(select_r_scree(&panel, 4).unwrap().chosen_k, 1);
    }

    #[test]
    fn s_selection_degenerate_kmax() {
        let e = DMatrix::from_fn(5, 4, |i, j| (i * j) as f64);
        let rep = select_s_errors(&e, 0, SelectionCriterion::Icp1).unwrap();
        assert_eq!(rep.chosen_k, 0);
        assert_eq!(rep.candidate_values.len(), 1);
        assert!(select_s_errors(&e, 5, SelectionCriterion::Icp1).is_err());
        assert!(select_s_errors(&e, 2, SelectionCriterion::Scree).is_err());
    }

    fn noise_matrix(n: usize, t: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, t, |_, _| StandardNormal.sample(rng))
    }

    #[test]
    fn pure_noise_selects_zero_factors() {
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let e = noise_matrix(100, 10, &mut rng);
            if select_s_errors(&e, 4, SelectionCriterion::Icp1).unwrap().chosen_k == 0 {
                hits += 1;
            }
        }
        assert!(hits >= 90, "{hits}/100");
    }

    #[test]
    fn two_factor_matrix_with_tiny_noise() {
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
            let gamma = noise_matrix(100, 2, &mut rng);
            let g = noise_matrix(10, 2, &mut rng);
            let e = &gamma * g.transpose() * 2.0 + noise_matrix(100, 10, &mut rng) * 0.01;
            if select_s_errors(&e, 4, SelectionCriterion::Icp1).unwrap().chosen_k == 2 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }
}
