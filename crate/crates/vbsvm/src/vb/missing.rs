//! Variational fitter that treats missing predictor entries as latent
//! variables.
//!
//! Predictor rows are modeled as draws from a multivariate normal with a
//! normal-mean / inverse-Wishart-covariance prior, so missing cells are
//! imputed jointly with the classifier instead of in a separate
//! preprocessing pass: each sweep refreshes the missing entries from their
//! conditional distribution given the current classifier and
//! feature-distribution factors, and the imputation uncertainty feeds back
//! into the coefficient update.
//!
//! The design is intercept-plus-predictors: the intercept has a fixed
//! normal prior, the predictor coefficients share a learned variance.

use nalgebra::{DMatrix, DVector};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse_ln_det, symmetrize, SpdChol};
use crate::special::{ln_gamma, log_multivariate_gamma};

use super::{check_labels, chi_to_mean_inv_a, guard_finite, sum_log_k_half, PriorConfig};

/// Row-wise missingness layout of a feature matrix.
#[derive(Debug, Clone)]
pub struct MissingPattern {
    /// Missing column indices per row, sorted; empty for complete rows.
    pub missing: Vec<Vec<usize>>,
    /// Rows with at least one missing entry.
    pub incomplete_rows: Vec<usize>,
}

impl MissingPattern {
    pub fn n_missing_cells(&self) -> usize {
        self.missing.iter().map(Vec::len).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.incomplete_rows.is_empty()
    }
}

/// Scan a feature matrix (NaN marks a missing cell) into a
/// [`MissingPattern`].
pub fn build_missing_pattern(features: &DMatrix<f64>) -> MissingPattern {
    let mut missing = Vec::with_capacity(features.nrows());
    let mut incomplete_rows = Vec::new();
    for i in 0..features.nrows() {
        let cols: Vec<usize> =
            (0..features.ncols()).filter(|&j| features[(i, j)].is_nan()).collect();
        if !cols.is_empty() {
            incomplete_rows.push(i);
        }
        missing.push(cols);
    }
    MissingPattern { missing, incomplete_rows }
}

/// Converged variational state for the missing-data classifier.
/// Coefficients are stacked intercept-then-predictors.
#[derive(Debug, Clone)]
pub struct VbMissingState {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub chi: DVector<f64>,
    pub mu_a_inv: DVector<f64>,
    /// Feature matrix with missing cells replaced by their posterior means.
    pub imputed: DMatrix<f64>,
    /// Posterior covariance of the missing block, one matrix per row
    /// (empty for complete rows), indices following `pattern.missing`.
    pub imputed_cov: Vec<DMatrix<f64>>,
    pub pattern: MissingPattern,
    /// Posterior mean of the feature-distribution mean.
    pub mu_mean: DVector<f64>,
    /// Posterior covariance of the feature-distribution mean.
    pub sigma_mean: DMatrix<f64>,
    /// Posterior scale of the feature-distribution covariance.
    pub psi_q: DMatrix<f64>,
    /// `E[Sigma_d^{-1}]`, the expected feature precision.
    pub mean_inv_cov: DMatrix<f64>,
    /// `E[1/sigma_u^2]` under the fitted inverse-gamma factor.
    pub mu_inv_sigma_u: f64,
    /// Rate parameter of the fitted inverse-gamma factor.
    pub b_q_sigma_u: f64,
    /// Number of predictor columns.
    pub d: usize,
    pub lb_trace: Vec<f64>,
    pub converged: bool,
}

impl VbMissingState {
    pub fn final_lower_bound(&self) -> f64 {
        *self.lb_trace.last().expect("fit always records at least one sweep")
    }

    /// Intercept of the fitted classifier.
    pub fn intercept(&self) -> f64 {
        self.mu[0]
    }

    /// Predictor coefficients of the fitted classifier.
    pub fn coefficients(&self) -> DVector<f64> {
        DVector::from_iterator(self.d, self.mu.iter().skip(1).copied())
    }
}

/// Observed-column means; errors if a column has no observed entries.
pub(crate) fn observed_column_means(features: &DMatrix<f64>) -> Result<DVector<f64>> {
    let d = features.ncols();
    let mut means = DVector::zeros(d);
    for j in 0..d {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..features.nrows() {
            let v = features[(i, j)];
            if !v.is_nan() {
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Data(format!(
                "column {j} has no observed entries; cannot fit an imputation model"
            )));
        }
        means[j] = sum / count as f64;
    }
    Ok(means)
}

/// Starting value for the expected feature precision: complete-case scatter
/// around the column means when enough complete rows exist, otherwise a
/// diagonal of observed-column variances.
fn initial_scatter(features: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let (n, d) = (features.nrows(), features.ncols());
    let complete: Vec<usize> =
        (0..n).filter(|&i| (0..d).all(|j| !features[(i, j)].is_nan())).collect();
    if complete.len() >= 2 {
        let mut s = DMatrix::zeros(d, d);
        for &i in &complete {
            let dev = DVector::from_fn(d, |j, _| features[(i, j)] - means[j]);
            s += &dev * dev.transpose();
        }
        return s;
    }
    let mut s = DMatrix::zeros(d, d);
    for j in 0..d {
        let obs: Vec<f64> =
            (0..n).map(|i| features[(i, j)]).filter(|v| !v.is_nan()).collect();
        let var = if obs.len() >= 2 {
            let m = obs.iter().sum::<f64>() / obs.len() as f64;
            obs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (obs.len() as f64 - 1.0)
        } else {
            1.0
        };
        s[(j, j)] = var.max(1e-8);
    }
    s
}

/// Fit the missing-data classifier by coordinate ascent.
pub fn fit_vb_missing(
    data: &LabeledDataset,
    prior: &PriorConfig,
    init_weights: Option<&DVector<f64>>,
) -> Result<VbMissingState> {
    let (n, d) = (data.n_rows(), data.n_features());
    if d == 0 {
        return Err(Error::Dimension("missing-data fit needs d >= 1".to_string()));
    }
    check_labels(&data.labels, n)?;
    prior.validate()?;
    let nu = prior.resolve_nu(d)?;
    let psi = prior.psi_matrix(d)?;
    let ln_det_psi = SpdChol::new(&psi)
        .map_err(|_| Error::Domain("psi must be positive definite".to_string()))?
        .ln_det();
    let ctrl = prior.solver;
    let pattern = build_missing_pattern(&data.features);
    let y = &data.labels;
    let q = 1 + d;

    // Initial state.
    let col_means = observed_column_means(&data.features)?;
    let mut imputed = data.features.clone();
    for i in 0..n {
        for &j in &pattern.missing[i] {
            imputed[(i, j)] = col_means[j];
        }
    }
    let mut imputed_cov: Vec<DMatrix<f64>> = pattern
        .missing
        .iter()
        .map(|m| DMatrix::zeros(m.len(), m.len()))
        .collect();
    let mut mu_mean = col_means;
    let scatter = initial_scatter(&data.features, &mu_mean);
    let mut mean_inv_cov = {
        let (inv, _) = spd_inverse_ln_det(&symmetrize(&(&psi + scatter)))?;
        inv * (nu + n as f64)
    };
    let mut sigma_mean = DMatrix::zeros(d, d);
    let mut mu_a_inv = match init_weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Dimension(format!(
                    "init weight vector has length {}, need {n}",
                    w.len()
                )));
            }
            w.clone()
        }
        None => DVector::from_element(n, 1.0),
    };
    let mut mu_inv_sigma_u = prior.a_u / prior.b_u;

    let mut lb_trace = Vec::new();
    let mut converged = false;
    let mut kept: Option<Kept> = None;

    for sweep in 0..ctrl.max_iter {
        // Coefficient block. The imputation uncertainty enters through the
        // weighted sum of per-row feature covariances.
        let c_tilde = assemble_design(&imputed);
        let mut prec = c_tilde.transpose() * DMatrix::from_diagonal(&mu_a_inv) * &c_tilde;
        for (i, cov) in imputed_cov.iter().enumerate() {
            let rows = &pattern.missing[i];
            if rows.is_empty() {
                continue;
            }
            for (a, &ja) in rows.iter().enumerate() {
                for (b, &jb) in rows.iter().enumerate() {
                    prec[(1 + ja, 1 + jb)] += mu_a_inv[i] * cov[(a, b)];
                }
            }
        }
        prec[(0, 0)] += 1.0 / prior.sigma2_beta;
        for j in 1..q {
            prec[(j, j)] += mu_inv_sigma_u;
        }
        let chol = SpdChol::new(&symmetrize(&prec))
            .map_err(|e| Error::numerical_at(format!("coefficient update: {e}"), sweep))?;
        let rhs = c_tilde.transpose() * y.component_mul(&mu_a_inv.add_scalar(1.0));
        let mu = chol.solve(&rhs);
        let sigma = chol.inverse();
        let ln_det_sigma = -chol.ln_det();

        let mu_u = DVector::from_iterator(d, mu.iter().skip(1).copied());
        let sigma_u = sigma.view((1, 1), (d, d)).into_owned();
        let omega_u = symmetrize(&(&sigma_u + &mu_u * mu_u.transpose()));
        let omega_u_beta = DVector::from_fn(d, |j, _| sigma[(1 + j, 0)] + mu_u[j] * mu[0]);

        // Imputation block: refresh each incomplete row's missing entries
        // from the current classifier and feature-distribution factors.
        let mut sum_ln_det_cov = 0.0;
        for i in 0..n {
            let miss = &pattern.missing[i];
            if miss.is_empty() {
                continue;
            }
            let w_i = mu_a_inv[i];
            let joint = &mean_inv_cov + omega_u.scale(w_i);
            // Observed part of the row, missing coordinates zeroed.
            let mut obs_part = DVector::from_fn(d, |j, _| imputed[(i, j)]);
            for &j in miss {
                obs_part[j] = 0.0;
            }
            let full_rhs = &mean_inv_cov * &mu_mean + mu_u.scale(y[i] * (1.0 + w_i))
                - omega_u_beta.scale(w_i)
                - &joint * obs_part;
            let lam = DMatrix::from_fn(miss.len(), miss.len(), |a, b| {
                joint[(miss[a], miss[b])]
            });
            let lam_chol = SpdChol::new(&symmetrize(&lam))
                .map_err(|e| Error::numerical_at(format!("imputation update: {e}"), sweep))?;
            let sub_rhs = DVector::from_fn(miss.len(), |a, _| full_rhs[miss[a]]);
            let mean = lam_chol.solve(&sub_rhs);
            let cov = lam_chol.inverse();
            sum_ln_det_cov += -lam_chol.ln_det();
            for (a, &j) in miss.iter().enumerate() {
                imputed[(i, j)] = mean[a];
            }
            imputed_cov[i] = cov;
        }

        // Augmentation block with the refreshed imputations.
        let c_tilde = assemble_design(&imputed);
        let fitted = &c_tilde * &mu;
        let quad = crate::linalg::diag_quadform(&c_tilde, &sigma);
        let mut chi = DVector::from_fn(n, |i, _| {
            let mut v = (1.0 - y[i] * fitted[i]).powi(2) + quad[i];
            let miss = &pattern.missing[i];
            if !miss.is_empty() {
                let cov = &imputed_cov[i];
                for (a, &ja) in miss.iter().enumerate() {
                    for (b, &jb) in miss.iter().enumerate() {
                        v += cov[(a, b)] * (mu_u[ja] * mu_u[jb] + sigma_u[(ja, jb)]);
                    }
                }
            }
            v
        });
        mu_a_inv = chi_to_mean_inv_a(&mut chi);

        // Feature-distribution mean block.
        let mut prec_mean = mean_inv_cov.scale(n as f64);
        for j in 0..d {
            prec_mean[(j, j)] += 1.0 / prior.sigma2_mu;
        }
        let mean_chol = SpdChol::new(&symmetrize(&prec_mean))?;
        let col_sums = DVector::from_fn(d, |j, _| (0..n).map(|i| imputed[(i, j)]).sum());
        mu_mean = mean_chol.solve(&(&mean_inv_cov * col_sums));
        sigma_mean = mean_chol.inverse();
        let ln_det_sigma_mean = -mean_chol.ln_det();

        // Feature-distribution covariance block.
        let mut psi_q = &psi + sigma_mean.scale(n as f64);
        for i in 0..n {
            let dev = DVector::from_fn(d, |j, _| imputed[(i, j)] - mu_mean[j]);
            psi_q += &dev * dev.transpose();
            let miss = &pattern.missing[i];
            let cov = &imputed_cov[i];
            for (a, &ja) in miss.iter().enumerate() {
                for (b, &jb) in miss.iter().enumerate() {
                    psi_q[(ja, jb)] += cov[(a, b)];
                }
            }
        }
        psi_q = symmetrize(&psi_q);
        let (psi_q_inv, ln_det_psi_q) = spd_inverse_ln_det(&psi_q)?;
        mean_inv_cov = psi_q_inv * (nu + n as f64);

        // Coefficient-variance block.
        let u_sq = mu_u.norm_squared() + sigma_u.trace();
        let b_q = prior.b_u + 0.5 * u_sq;
        mu_inv_sigma_u = (prior.a_u + d as f64 / 2.0) / b_q;

        let lb = lower_bound_parts(&BoundParts {
            n,
            d,
            nu,
            prior,
            fit_term: y.dot(&fitted),
            chi: &chi,
            ln_det_sigma,
            beta_sq: mu[0] * mu[0] + sigma[(0, 0)],
            b_q,
            ln_det_sigma_mean,
            mean_sq: mu_mean.norm_squared() + sigma_mean.trace(),
            ln_det_psi,
            ln_det_psi_q,
            n_missing_cells: pattern.n_missing_cells(),
            sum_ln_det_cov,
        })?;
        let lb = guard_finite(lb, sweep)?;
        let prev = lb_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        lb_trace.push(lb);
        kept = Some(Kept { mu, sigma, chi, b_q, psi_q });
        if ctrl.converged(prev, lb) {
            converged = true;
            break;
        }
    }

    let Kept { mu, sigma, chi, b_q: b_q_sigma_u, psi_q, .. } = kept.expect("max_iter >= 1");
    Ok(VbMissingState {
        mu,
        sigma,
        chi,
        mu_a_inv,
        imputed,
        imputed_cov,
        pattern,
        mu_mean,
        sigma_mean,
        psi_q,
        mean_inv_cov,
        mu_inv_sigma_u,
        b_q_sigma_u,
        d,
        lb_trace,
        converged,
    })
}

struct Kept {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    chi: DVector<f64>,
    b_q: f64,
    psi_q: DMatrix<f64>,
}

fn assemble_design(imputed: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = (imputed.nrows(), imputed.ncols());
    let mut c = DMatrix::from_element(n, 1 + d, 1.0);
    for i in 0..n {
        for j in 0..d {
            c[(i, 1 + j)] = imputed[(i, j)];
        }
    }
    c
}

struct BoundParts<'a> {
    n: usize,
    d: usize,
    nu: f64,
    prior: &'a PriorConfig,
    fit_term: f64,
    chi: &'a DVector<f64>,
    ln_det_sigma: f64,
    beta_sq: f64,
    b_q: f64,
    ln_det_sigma_mean: f64,
    mean_sq: f64,
    ln_det_psi: f64,
    ln_det_psi_q: f64,
    n_missing_cells: usize,
    sum_ln_det_cov: f64,
}

fn lower_bound_parts(parts: &BoundParts) -> Result<f64> {
    let BoundParts {
        n,
        d,
        nu,
        prior,
        fit_term,
        chi,
        ln_det_sigma,
        beta_sq,
        b_q,
        ln_det_sigma_mean,
        mean_sq,
        ln_det_psi,
        ln_det_psi_q,
        n_missing_cells,
        sum_ln_det_cov,
    } = *parts;
    let (nf, df) = (n as f64, d as f64);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let a_tilde = prior.a_u + df / 2.0;
    Ok(
        // Classification likelihood and augmentation factors.
        nf * std::f64::consts::LN_2 - nf - nf / 2.0 * ln_2pi
            + fit_term
            + 0.25 * chi.iter().map(|&c| c.ln()).sum::<f64>()
            + sum_log_k_half(chi)?
            // Coefficient factor and priors.
            - 0.5 * prior.sigma2_beta.ln()
            - beta_sq / (2.0 * prior.sigma2_beta)
            + (1.0 + df) / 2.0
            + 0.5 * ln_det_sigma
            + prior.a_u * prior.b_u.ln()
            - ln_gamma(prior.a_u)
            - a_tilde * b_q.ln()
            + ln_gamma(a_tilde)
            // Feature-distribution likelihood and mean factor.
            - nf * df / 2.0 * ln_2pi
            + df / 2.0
            + 0.5 * ln_det_sigma_mean
            - df / 2.0 * prior.sigma2_mu.ln()
            - mean_sq / (2.0 * prior.sigma2_mu)
            // Covariance factor (Wishart prior vs posterior).
            + nu / 2.0 * ln_det_psi
            - log_multivariate_gamma(d, nu / 2.0)?
            - (nu + nf) / 2.0 * ln_det_psi_q
            + nf * df / 2.0 * std::f64::consts::LN_2
            + log_multivariate_gamma(d, (nu + nf) / 2.0)?
            // Imputation factors.
            + n_missing_cells as f64 / 2.0 * (1.0 + ln_2pi)
            + 0.5 * sum_ln_det_cov,
    )
}

/// Lower bound recomputed from a stored state; matches the final trace
/// entry of the fit that produced it.
pub fn lower_bound_missing(
    state: &VbMissingState,
    data: &LabeledDataset,
    prior: &PriorConfig,
) -> Result<f64> {
    let (n, d) = (data.n_rows(), data.n_features());
    check_labels(&data.labels, n)?;
    if state.d != d || state.mu.len() != 1 + d || state.chi.len() != n {
        return Err(Error::Dimension(
            "state does not match dataset dimensions".to_string(),
        ));
    }
    let nu = prior.resolve_nu(d)?;
    let psi = prior.psi_matrix(d)?;
    let c_tilde = assemble_design(&state.imputed);
    let fitted = &c_tilde * &state.mu;
    let sum_ln_det_cov = state
        .imputed_cov
        .iter()
        .filter(|c| c.nrows() > 0)
        .map(|c| SpdChol::new(c).map(|ch| ch.ln_det()))
        .sum::<Result<f64>>()?;
    lower_bound_parts(&BoundParts {
        n,
        d,
        nu,
        prior,
        fit_term: data.labels.dot(&fitted),
        chi: &state.chi,
        ln_det_sigma: SpdChol::new(&state.sigma)?.ln_det(),
        beta_sq: state.mu[0] * state.mu[0] + state.sigma[(0, 0)],
        b_q: state.b_q_sigma_u,
        ln_det_sigma_mean: SpdChol::new(&state.sigma_mean)?.ln_det(),
        mean_sq: state.mu_mean.norm_squared() + state.sigma_mean.trace(),
        ln_det_psi: SpdChol::new(&psi)?.ln_det(),
        ln_det_psi_q: SpdChol::new(&state.psi_q)?.ln_det(),
        n_missing_cells: state.pattern.n_missing_cells(),
        sum_ln_det_cov,
    })
}

/// The feature matrix with missing entries replaced by posterior means.
pub fn impute(state: &VbMissingState) -> DMatrix<f64> {
    state.imputed.clone()
}

/// Hard labels for new feature rows, which may themselves contain missing
/// entries: those are filled with the fitted feature-distribution's
/// conditional mean given the row's observed entries before scoring.
pub fn predict_missing(
    state: &VbMissingState,
    features_new: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let scores = missing_decision_values(state, features_new)?;
    Ok(DVector::from_iterator(
        scores.len(),
        scores.iter().map(|&s| if s >= 0.0 { 1.0 } else { -1.0 }),
    ))
}

/// Decision scores for new feature rows; see [`predict_missing`].
pub fn missing_decision_values(
    state: &VbMissingState,
    features_new: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let d = state.d;
    if features_new.ncols() != d {
        return Err(Error::Dimension(format!(
            "{} feature columns, model has {d}",
            features_new.ncols()
        )));
    }
    let coef = state.coefficients();
    let mut scores = DVector::zeros(features_new.nrows());
    for i in 0..features_new.nrows() {
        let row = features_new.row(i).transpose();
        let filled = conditional_fill(&row, &state.mu_mean, &state.mean_inv_cov)?;
        scores[i] = state.intercept() + coef.dot(&filled);
    }
    Ok(scores)
}

/// Fill the NaN entries of every row with the normal conditional mean given
/// that row's observed entries, under a feature model with the given mean
/// and precision. Complete rows pass through unchanged.
pub fn conditional_fill_rows(
    features: &DMatrix<f64>,
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let d = mean.len();
    if features.ncols() != d || precision.nrows() != d || precision.ncols() != d {
        return Err(Error::Dimension(format!(
            "feature model of dimension {d} against a {}x{} feature matrix and {}x{} precision",
            features.nrows(),
            features.ncols(),
            precision.nrows(),
            precision.ncols()
        )));
    }
    let mut out = features.clone();
    for i in 0..features.nrows() {
        let row = features.row(i).transpose();
        if row.iter().any(|v| v.is_nan()) {
            let filled = conditional_fill(&row, mean, precision)?;
            out.set_row(i, &filled.transpose());
        }
    }
    Ok(out)
}

/// Fill the NaN entries of one row with the normal conditional mean given
/// the observed entries, parameterized by the precision matrix: the
/// conditional mean solves `W_MM (x_M - m_M) = -W_MO (x_O - m_O)`.
fn conditional_fill(
    row: &DVector<f64>,
    mean: &DVector<f64>,
    precision: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let miss: Vec<usize> = (0..row.len()).filter(|&j| row[j].is_nan()).collect();
    let mut filled = row.clone();
    if miss.is_empty() {
        return Ok(filled);
    }
    let mut rhs = DVector::zeros(miss.len());
    for (a, &ja) in miss.iter().enumerate() {
        let mut s = 0.0;
        for j in 0..row.len() {
            if !row[j].is_nan() {
                s += precision[(ja, j)] * (row[j] - mean[j]);
            }
        }
        rhs[a] = -s;
    }
    let w_mm = DMatrix::from_fn(miss.len(), miss.len(), |a, b| precision[(miss[a], miss[b])]);
    let sol = SpdChol::new(&symmetrize(&w_mm))?.solve(&rhs);
    for (a, &ja) in miss.iter().enumerate() {
        filled[ja] = mean[ja] + sol[a];
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DesignPair;
    use crate::rng::RngState;
    use crate::simulate::{apply_mcar, simulate_logistic};
    use crate::vb::SolverControls;
    use approx::assert_relative_eq;

    fn mcar_problem(n: usize, d: usize, rate: f64, seed: u64) -> LabeledDataset {
        let mut rng = RngState::from_seed(seed);
        let mut sim = simulate_logistic(n, d, &mut rng).unwrap();
        apply_mcar(&mut sim.data, rate, &mut rng).unwrap();
        sim.data
    }

    #[test]
    fn pattern_scan() {
        let mut m = DMatrix::from_element(3, 2, 1.0);
        m[(0, 1)] = f64::NAN;
        m[(2, 0)] = f64::NAN;
        m[(2, 1)] = f64::NAN;
        let p = build_missing_pattern(&m);
        assert_eq!(p.missing[0], vec![1]);
        assert!(p.missing[1].is_empty());
        assert_eq!(p.missing[2], vec![0, 1]);
        assert_eq!(p.incomplete_rows, vec![0, 2]);
        assert_eq!(p.n_missing_cells(), 3);
        assert!(!p.is_complete());
    }

    #[test]
    fn complete_data_matches_mixed_fitter() {
        // With nothing missing the imputation machinery is inert and each
        // sweep's coefficient update is exactly the mixed-model one. The two
        // bounds differ (this fitter's includes the feature-distribution
        // terms), so rather than compare stopping points we run both for the
        // same fixed number of sweeps and expect machine-precision agreement.
        for seed in 0..5 {
            let mut rng = RngState::from_seed(900 + seed);
            let sim = simulate_logistic(40, 2, &mut rng).unwrap();
            // 20 sweeps is well short of bound stagnation, so the length
            // assertion below confirms both fitters ran all of them.
            let solver = SolverControls { tol: 1e-300, max_iter: 20, ..Default::default() };
            let prior = PriorConfig { solver, ..PriorConfig::default() };

            let fit_m = fit_vb_missing(&sim.data, &prior, None).unwrap();
            let design = DesignPair::new(
                DMatrix::from_element(40, 1, 1.0),
                sim.data.features.clone(),
            )
            .unwrap();
            let fit_x = crate::vb::mixed::fit_vb_mixed(&design, &sim.data.labels, &prior, None)
                .unwrap();
            assert_eq!(fit_m.lb_trace.len(), fit_x.lb_trace.len());
            let gap = (&fit_m.mu - &fit_x.mu).amax();
            assert!(gap < 1e-10, "coefficient gap {gap} at seed {seed}");
            assert!((&fit_m.sigma - &fit_x.sigma).amax() < 1e-10);
            assert!((&fit_m.chi - &fit_x.chi).amax() < 1e-10);
            assert_eq!(fit_m.mu_inv_sigma_u, fit_x.mu_inv_sigma_u);
        }
    }

    #[test]
    fn monotone_bound_and_recompute() {
        for seed in 0..8 {
            let data = mcar_problem(50, 3, 0.2, 40 + seed);
            let prior = PriorConfig::default();
            let fit = fit_vb_missing(&data, &prior, None).unwrap();
            for w in fit.lb_trace.windows(2) {
                assert!(
                    w[1] >= w[0] - 1e-8,
                    "bound decreased {} -> {} (seed {seed})",
                    w[0],
                    w[1]
                );
            }
            let recomputed = lower_bound_missing(&fit, &data, &prior).unwrap();
            assert_relative_eq!(recomputed, fit.final_lower_bound(), epsilon = 1e-9);
        }
    }

    #[test]
    fn bound_matches_naive_term_sum() {
        // Recompute the final bound with plain loops and scalar functions
        // only, as an independent route through the formula.
        let data = mcar_problem(25, 2, 0.25, 3);
        let prior = PriorConfig::default();
        let fit = fit_vb_missing(&data, &prior, None).unwrap();

        let (n, d) = (25usize, 2usize);
        let (nf, df) = (n as f64, d as f64);
        let nu = prior.resolve_nu(d).unwrap();
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();

        let mut fit_term = 0.0;
        for i in 0..n {
            let mut eta = fit.mu[0];
            for j in 0..d {
                eta += fit.imputed[(i, j)] * fit.mu[1 + j];
            }
            fit_term += data.labels[i] * eta;
        }
        let mut bessel = 0.0;
        for i in 0..n {
            bessel += 0.25 * fit.chi[i].ln()
                + crate::special::log_bessel_k_half(fit.chi[i].sqrt()).unwrap();
        }
        let det = |m: &DMatrix<f64>| m.clone().determinant().ln();
        let mut entropy_d = 0.0;
        for cov in fit.imputed_cov.iter().filter(|c| c.nrows() > 0) {
            entropy_d += 0.5 * (cov.nrows() as f64) * (1.0 + ln_2pi) + 0.5 * det(cov);
        }
        let a_tilde = prior.a_u + df / 2.0;
        let by_hand = nf * 2.0f64.ln() - nf - nf / 2.0 * ln_2pi
            + fit_term
            + bessel
            - 0.5 * prior.sigma2_beta.ln()
            - (fit.mu[0] * fit.mu[0] + fit.sigma[(0, 0)]) / (2.0 * prior.sigma2_beta)
            + (1.0 + df) / 2.0
            + 0.5 * det(&fit.sigma)
            + prior.a_u * prior.b_u.ln()
            - crate::special::ln_gamma(prior.a_u)
            - a_tilde * fit.b_q_sigma_u.ln()
            + crate::special::ln_gamma(a_tilde)
            - nf * df / 2.0 * ln_2pi
            + df / 2.0
            + 0.5 * det(&fit.sigma_mean)
            - df / 2.0 * prior.sigma2_mu.ln()
            - (fit.mu_mean.norm_squared() + fit.sigma_mean.trace())
                / (2.0 * prior.sigma2_mu)
            + nu / 2.0 * det(&prior.psi_matrix(d).unwrap())
            - crate::special::log_multivariate_gamma(d, nu / 2.0).unwrap()
            - (nu + nf) / 2.0 * det(&fit.psi_q)
            + nf * df / 2.0 * 2.0f64.ln()
            + crate::special::log_multivariate_gamma(d, (nu + nf) / 2.0).unwrap()
            + entropy_d;
        assert_relative_eq!(fit.final_lower_bound(), by_hand, epsilon = 1e-8);
    }

    #[test]
    fn duplicated_column_imputation_tracks_twin() {
        // Column 1 duplicates column 0; where column 1 is missing, the
        // fitted conditional mean should land close to column 0's value.
        let mut rng = RngState::from_seed(17);
        let n = 120;
        let sim = simulate_logistic(n, 1, &mut rng).unwrap();
        let mut features = DMatrix::zeros(n, 2);
        for i in 0..n {
            features[(i, 0)] = sim.data.features[(i, 0)];
            features[(i, 1)] = sim.data.features[(i, 0)];
        }
        for i in (0..n).step_by(4) {
            features[(i, 1)] = f64::NAN;
        }
        let data = LabeledDataset::new(
            features,
            sim.data.labels.clone(),
            vec!["a".to_string(), "b".to_string()],
            None,
        )
        .unwrap();
        let fit = fit_vb_missing(&data, &PriorConfig::default(), None).unwrap();
        let mut worst: f64 = 0.0;
        for i in (0..n).step_by(4) {
            worst = worst.max((fit.imputed[(i, 1)] - data.features[(i, 0)]).abs());
        }
        assert!(worst < 0.25, "worst imputation gap {worst}");
    }

    #[test]
    fn imputation_row_update_is_stationary() {
        // Recompute one row's conditional update from the converged state;
        // the stored mean must already satisfy it.
        let data = mcar_problem(40, 3, 0.3, 11);
        let prior = PriorConfig::default();
        let solver = SolverControls { tol: 1e-300, max_iter: 4000, ..Default::default() };
        let prior = PriorConfig { solver, ..prior };
        let fit = fit_vb_missing(&data, &prior, None).unwrap();
        let d = 3;
        let mu_u = fit.coefficients();
        let sigma_u = fit.sigma.view((1, 1), (d, d)).into_owned();
        let omega_u = &sigma_u + &mu_u * mu_u.transpose();
        let omega_u_beta =
            DVector::from_fn(d, |j, _| fit.sigma[(1 + j, 0)] + mu_u[j] * fit.mu[0]);

        for (i, miss) in fit.pattern.missing.iter().enumerate() {
            if miss.is_empty() {
                continue;
            }
            let w_i = fit.mu_a_inv[i];
            let joint = &fit.mean_inv_cov + omega_u.scale(w_i);
            let mut obs = DVector::from_fn(d, |j, _| fit.imputed[(i, j)]);
            for &j in miss {
                obs[j] = 0.0;
            }
            let full_rhs = &fit.mean_inv_cov * &fit.mu_mean
                + mu_u.scale(data.labels[i] * (1.0 + w_i))
                - omega_u_beta.scale(w_i)
                - &joint * obs;
            let lam = DMatrix::from_fn(miss.len(), miss.len(), |a, b| {
                joint[(miss[a], miss[b])]
            });
            let rhs = DVector::from_fn(miss.len(), |a, _| full_rhs[miss[a]]);
            let mean = SpdChol::new(&lam).unwrap().solve(&rhs);
            for (a, &j) in miss.iter().enumerate() {
                assert_relative_eq!(fit.imputed[(i, j)], mean[a], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn conditional_fill_matches_covariance_route() {
        // Precision-parameterized conditional mean equals the textbook
        // covariance-based formula.
        let mut rng = RngState::from_seed(5);
        let d = 4;
        let a = DMatrix::from_fn(d, d, |_, _| {
            rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal)
        });
        let cov = &a * a.transpose() + DMatrix::identity(d, d);
        let (precision, _) = spd_inverse_ln_det(&cov).unwrap();
        let mean = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);

        let mut row = DVector::from_vec(vec![2.0, f64::NAN, 1.0, f64::NAN]);
        let filled = conditional_fill(&row, &mean, &precision).unwrap();

        // Covariance route: m_M + S_MO S_OO^{-1} (x_O - m_O).
        let (miss, obs) = (vec![1usize, 3], vec![0usize, 2]);
        let s_mo = DMatrix::from_fn(2, 2, |a, b| cov[(miss[a], obs[b])]);
        let s_oo = DMatrix::from_fn(2, 2, |a, b| cov[(obs[a], obs[b])]);
        let dev = DVector::from_fn(2, |a, _| row[obs[a]] - mean[obs[a]]);
        let expect = DVector::from_fn(2, |a, _| mean[miss[a]])
            + &s_mo * SpdChol::new(&s_oo).unwrap().solve(&dev);
        assert_relative_eq!(filled[1], expect[0], epsilon = 1e-10);
        assert_relative_eq!(filled[3], expect[1], epsilon = 1e-10);

        // All-observed row passes through, all-missing row gets the mean.
        row = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(conditional_fill(&row, &mean, &precision).unwrap(), row);
        row = DVector::from_element(4, f64::NAN);
        let filled = conditional_fill(&row, &mean, &precision).unwrap();
        assert_relative_eq!((&filled - &mean).amax(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn prediction_handles_missing_rows() {
        let data = mcar_problem(150, 3, 0.2, 23);
        let fit = fit_vb_missing(&data, &PriorConfig::default(), None).unwrap();
        let preds = predict_missing(&fit, &data.features).unwrap();
        assert!(preds.iter().all(|&v| v == 1.0 || v == -1.0));
        // Complete rows score exactly with the linear rule.
        let scores = missing_decision_values(&fit, &data.features).unwrap();
        for i in 0..150 {
            if fit.pattern.missing[i].is_empty() {
                let eta = fit.intercept()
                    + fit.coefficients().dot(&data.features.row(i).transpose());
                assert_relative_eq!(scores[i], eta, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        // A fully-missing column cannot be modeled.
        let mut features = DMatrix::from_element(5, 2, 1.0);
        for i in 0..5 {
            features[(i, 1)] = f64::NAN;
        }
        let data = LabeledDataset::new(
            features,
            DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0, 1.0]),
            vec!["a".to_string(), "b".to_string()],
            None,
        )
        .unwrap();
        assert!(fit_vb_missing(&data, &PriorConfig::default(), None).is_err());

        // Explicit nu too small for the dimension.
        let ok = mcar_problem(20, 3, 0.1, 2);
        let prior = PriorConfig { nu: Some(1.5), ..PriorConfig::default() };
        assert!(fit_vb_missing(&ok, &prior, None).is_err());
    }
}
