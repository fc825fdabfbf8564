//! Gibbs sampler for the missing-data classifier: intercept plus predictor
//! coefficients with a learned variance, a normal feature model with
//! normal-mean and inverse-Wishart-covariance priors, and per-cell draws
//! for the missing predictor entries.

use nalgebra::{DMatrix, DVector};

use crate::data::LabeledDataset;
use crate::dist::{
    sample_gig_half, sample_inverse_gamma, sample_inverse_wishart, sample_mvn_from_precision,
};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdChol};
use crate::rng::RngState;
use crate::vb::missing::observed_column_means;
use crate::vb::{build_missing_pattern, check_labels, MissingPattern, PriorConfig, CHI_FLOOR};

use super::{collect_chain, ChainSampler, GibbsChain, GibbsConfig};

/// Resumable Gibbs state for the missing-data classifier.
#[derive(Debug, Clone)]
pub struct GibbsMissingSampler {
    /// Labels; mutable so joint-distribution tests can redraw them.
    pub y: DVector<f64>,
    pattern: MissingPattern,
    prior: PriorConfig,
    nu: f64,
    psi: DMatrix<f64>,
    d: usize,
    /// Stacked coefficients: intercept then predictors.
    pub theta: DVector<f64>,
    /// Predictor-coefficient variance.
    pub sigma_u2: f64,
    /// Augmentation variables.
    pub a: DVector<f64>,
    /// Feature-distribution mean.
    pub feat_mean: DVector<f64>,
    /// Feature-distribution covariance.
    pub feat_cov: DMatrix<f64>,
    /// Feature matrix with current draws in the missing cells.
    pub imputed: DMatrix<f64>,
}

impl GibbsMissingSampler {
    pub fn new(data: &LabeledDataset, prior: &PriorConfig) -> Result<Self> {
        let (n, d) = (data.n_rows(), data.n_features());
        if d == 0 {
            return Err(Error::Dimension("missing-data sampler needs d >= 1".to_string()));
        }
        check_labels(&data.labels, n)?;
        prior.validate()?;
        let nu = prior.resolve_nu(d)?;
        let psi = prior.psi_matrix(d)?;
        let pattern = build_missing_pattern(&data.features);
        let col_means = observed_column_means(&data.features)?;
        let mut imputed = data.features.clone();
        for i in 0..n {
            for &j in &pattern.missing[i] {
                imputed[(i, j)] = col_means[j];
            }
        }
        // Diagonal of observed-column variances as the starting covariance.
        let mut feat_cov = DMatrix::zeros(d, d);
        for j in 0..d {
            let obs: Vec<f64> = (0..n)
                .map(|i| data.features[(i, j)])
                .filter(|v| !v.is_nan())
                .collect();
            feat_cov[(j, j)] = if obs.len() >= 2 {
                let m = obs.iter().sum::<f64>() / obs.len() as f64;
                (obs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (obs.len() as f64 - 1.0))
                    .max(1e-8)
            } else {
                1.0
            };
        }
        Ok(Self {
            y: data.labels.clone(),
            pattern,
            prior: prior.clone(),
            nu,
            psi,
            d,
            theta: DVector::zeros(1 + d),
            sigma_u2: prior.b_u / (prior.a_u + 1.0),
            a: DVector::from_element(n, 1.0),
            feat_mean: col_means,
            feat_cov,
            imputed,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn design(&self) -> DMatrix<f64> {
        let (n, d) = (self.imputed.nrows(), self.d);
        let mut c = DMatrix::from_element(n, 1 + d, 1.0);
        for i in 0..n {
            for j in 0..d {
                c[(i, 1 + j)] = self.imputed[(i, j)];
            }
        }
        c
    }

    /// Linear predictor at the current coefficients and imputations.
    pub fn linear_predictor(&self) -> DVector<f64> {
        self.design() * &self.theta
    }

    /// Draw the coefficient block from its Gaussian conditional.
    pub fn draw_coefficients(&mut self, rng: &mut RngState) -> Result<()> {
        let c = self.design();
        let w = self.a.map(|a| 1.0 / a);
        let mut prec = c.transpose() * DMatrix::from_diagonal(&w) * &c;
        prec[(0, 0)] += 1.0 / self.prior.sigma2_beta;
        for j in 1..1 + self.d {
            prec[(j, j)] += 1.0 / self.sigma_u2;
        }
        let chol = SpdChol::new(&symmetrize(&prec))?;
        let rhs = c.transpose() * self.y.component_mul(&w.add_scalar(1.0));
        let mean = chol.solve(&rhs);
        self.theta = sample_mvn_from_precision(&chol, &mean, rng)?;
        Ok(())
    }

    /// Draw the predictor-coefficient variance.
    pub fn draw_variance(&mut self, rng: &mut RngState) -> Result<()> {
        let u_sq: f64 = (1..1 + self.d).map(|j| self.theta[j] * self.theta[j]).sum();
        self.sigma_u2 = sample_inverse_gamma(
            self.prior.a_u + self.d as f64 / 2.0,
            self.prior.b_u + 0.5 * u_sq,
            rng,
        )?;
        Ok(())
    }

    /// Draw the augmentation variables.
    pub fn draw_augmentation(&mut self, rng: &mut RngState) -> Result<()> {
        let eta = self.linear_predictor();
        for i in 0..self.a.len() {
            let chi = (1.0 - self.y[i] * eta[i]).powi(2).max(CHI_FLOOR);
            self.a[i] = sample_gig_half(chi, rng)?;
        }
        Ok(())
    }

    /// Draw the feature-distribution mean from its Gaussian conditional.
    pub fn draw_feature_mean(&mut self, rng: &mut RngState) -> Result<()> {
        let n = self.imputed.nrows();
        let cov_inv = SpdChol::new(&self.feat_cov)?.inverse();
        let mut prec = cov_inv.scale(n as f64);
        for j in 0..self.d {
            prec[(j, j)] += 1.0 / self.prior.sigma2_mu;
        }
        let col_sums =
            DVector::from_fn(self.d, |j, _| (0..n).map(|i| self.imputed[(i, j)]).sum());
        let chol = SpdChol::new(&symmetrize(&prec))?;
        let mean = chol.solve(&(&cov_inv * col_sums));
        self.feat_mean = sample_mvn_from_precision(&chol, &mean, rng)?;
        Ok(())
    }

    /// Draw the feature-distribution covariance from its inverse-Wishart
    /// conditional.
    pub fn draw_feature_cov(&mut self, rng: &mut RngState) -> Result<()> {
        let n = self.imputed.nrows();
        let mut scale = self.psi.clone();
        for i in 0..n {
            let dev = DVector::from_fn(self.d, |j, _| self.imputed[(i, j)] - self.feat_mean[j]);
            scale += &dev * dev.transpose();
        }
        self.feat_cov =
            sample_inverse_wishart(&symmetrize(&scale), self.nu + n as f64, rng)?;
        Ok(())
    }

    /// Precision submatrix and right-hand side of one incomplete row's
    /// missing-entry conditional: the feature-model precision plus the
    /// rank-one likelihood term, restricted to the missing coordinates,
    /// with the observed coordinates folded into the potential.
    fn row_conditional(
        &self,
        i: usize,
        cov_inv: &DMatrix<f64>,
        u: &DVector<f64>,
        beta: f64,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let miss = &self.pattern.missing[i];
        let w_i = 1.0 / self.a[i];
        let lam_full = cov_inv + (u * u.transpose()).scale(w_i);
        let h = cov_inv * &self.feat_mean + u.scale(self.y[i] * (1.0 + w_i) - beta * w_i);
        let mut rhs = DVector::zeros(miss.len());
        for (a, &ja) in miss.iter().enumerate() {
            let mut s = h[ja];
            for j in 0..self.d {
                if !miss.contains(&j) {
                    s -= lam_full[(ja, j)] * self.imputed[(i, j)];
                }
            }
            rhs[a] = s;
        }
        let lam =
            DMatrix::from_fn(miss.len(), miss.len(), |a, b| lam_full[(miss[a], miss[b])]);
        (lam, rhs)
    }

    /// Conditional precision and mean of row `i`'s missing entries at the
    /// current state.
    pub fn missing_cell_conditional(&self, i: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let cov_inv = SpdChol::new(&self.feat_cov)?.inverse();
        let beta = self.theta[0];
        let u = DVector::from_iterator(self.d, self.theta.iter().skip(1).copied());
        let (lam, rhs) = self.row_conditional(i, &cov_inv, &u, beta);
        let mean = SpdChol::new(&symmetrize(&lam))?.solve(&rhs);
        Ok((lam, mean))
    }

    /// Redraw every missing cell from its Gaussian conditional given the
    /// observed entries in the same row, the classifier, and the feature
    /// distribution.
    pub fn draw_missing_cells(&mut self, rng: &mut RngState) -> Result<()> {
        if self.pattern.is_complete() {
            return Ok(());
        }
        let cov_inv = SpdChol::new(&self.feat_cov)?.inverse();
        let beta = self.theta[0];
        let u = DVector::from_iterator(self.d, self.theta.iter().skip(1).copied());
        for idx in 0..self.pattern.incomplete_rows.len() {
            let i = self.pattern.incomplete_rows[idx];
            let (lam, rhs) = self.row_conditional(i, &cov_inv, &u, beta);
            let chol = SpdChol::new(&symmetrize(&lam))?;
            let mean = chol.solve(&rhs);
            let draw = sample_mvn_from_precision(&chol, &mean, rng)?;
            for (a, &j) in self.pattern.missing[i].iter().enumerate() {
                self.imputed[(i, j)] = draw[a];
            }
        }
        Ok(())
    }

    /// One full sweep over all blocks.
    pub fn scan(&mut self, rng: &mut RngState) -> Result<()> {
        self.draw_coefficients(rng)?;
        self.draw_variance(rng)?;
        self.draw_augmentation(rng)?;
        self.draw_feature_mean(rng)?;
        self.draw_feature_cov(rng)?;
        self.draw_missing_cells(rng)
    }
}

impl ChainSampler for GibbsMissingSampler {
    fn scan(&mut self, rng: &mut RngState) -> Result<()> {
        GibbsMissingSampler::scan(self, rng)
    }

    fn record(&self, row: &mut [f64]) {
        for (j, v) in self.theta.iter().enumerate() {
            row[j] = *v;
        }
        row[1 + self.d] = self.sigma_u2;
        for j in 0..self.d {
            row[2 + self.d + j] = self.feat_mean[j];
        }
        let mut at = 2 + 2 * self.d;
        for j in 0..self.d {
            for k in 0..=j {
                row[at] = self.feat_cov[(j, k)];
                at += 1;
            }
        }
        for &i in &self.pattern.incomplete_rows {
            for &j in &self.pattern.missing[i] {
                row[at] = self.imputed[(i, j)];
                at += 1;
            }
        }
    }

    fn aux(&self) -> &DVector<f64> {
        &self.a
    }
}

pub(crate) fn missing_names(d: usize, pattern: &MissingPattern) -> Vec<String> {
    let mut names = vec!["beta".to_string()];
    names.extend((0..d).map(|j| format!("u[{j}]")));
    names.push("sigma_u2".to_string());
    names.extend((0..d).map(|j| format!("mu[{j}]")));
    for j in 0..d {
        names.extend((0..=j).map(|k| format!("sigma[{j},{k}]")));
    }
    for &i in &pattern.incomplete_rows {
        names.extend(pattern.missing[i].iter().map(|&j| format!("imp[{i},{j}]")));
    }
    names
}

/// Run a missing-data chain and return the kept draws.
pub fn gibbs_missing(
    data: &LabeledDataset,
    prior: &PriorConfig,
    config: &GibbsConfig,
) -> Result<GibbsChain> {
    let mut sampler = GibbsMissingSampler::new(data, prior)?;
    let mut rng = RngState::from_seed_stream(config.seed, config.stream);
    let names = missing_names(sampler.d, &sampler.pattern);
    collect_chain(&mut sampler, &mut rng, config, names)
}

/// Posterior means a predictor needs, recovered from a missing-data chain:
/// the stacked coefficient vector (intercept first), the feature mean, and
/// the feature covariance (symmetric, rebuilt from its stored lower
/// triangle).
pub fn chain_imputation_summary(
    chain: &GibbsChain,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>)> {
    let d = chain.names.iter().filter(|n| n.starts_with("u[")).count();
    if d == 0 || chain.index_of("beta").is_none() {
        return Err(Error::Data(
            "chain does not carry missing-data classifier draws".to_string(),
        ));
    }
    let means = chain.means();
    let theta = DVector::from_iterator(1 + d, (0..1 + d).map(|j| means[j]));
    let mu = DVector::from_iterator(d, (0..d).map(|j| means[2 + d + j]));
    let mut sigma = DMatrix::zeros(d, d);
    let mut at = 2 + 2 * d;
    for j in 0..d {
        for k in 0..=j {
            sigma[(j, k)] = means[at];
            sigma[(k, j)] = means[at];
            at += 1;
        }
    }
    Ok((theta, mu, sigma))
}
