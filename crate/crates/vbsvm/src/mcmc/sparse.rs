//! Gibbs sampler for the spike-and-slab classifier: binary inclusion
//! indicators on the selectable columns, per-coefficient local scales giving
//! the included coefficients a double-exponential marginal prior, and the
//! shared augmentation block.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::DesignPair;
use crate::dist::{
    sample_gig_half, sample_inverse_gamma, sample_inverse_gaussian, sample_mvn_from_precision,
};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdChol};
use crate::rng::RngState;
use crate::special::{expit, logit};
use crate::vb::{check_labels, PriorConfig, CHI_FLOOR};

use super::{collect_chain, ChainSampler, GibbsChain, GibbsConfig};

/// Upper cap on the local-scale conditional mean, used when a coefficient
/// is numerically zero.
const B_MEAN_CAP: f64 = 1e12;

/// Resumable Gibbs state for the spike-and-slab classifier.
#[derive(Debug, Clone)]
pub struct GibbsSparseSampler {
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    /// Labels; mutable so joint-distribution tests can redraw them.
    pub y: DVector<f64>,
    p: usize,
    m: usize,
    prior: PriorConfig,
    logit_rho: f64,
    /// Stacked coefficients: always-included block, then selectable block
    /// (the latter enter the predictor only where `gamma` is 1).
    pub theta: DVector<f64>,
    /// Inclusion indicators, stored as 0/1.
    pub gamma: DVector<f64>,
    /// Slab variance.
    pub sigma_u2: f64,
    /// Augmentation variables.
    pub a: DVector<f64>,
    /// Local scales on the selectable coefficients.
    pub b: DVector<f64>,
}

impl GibbsSparseSampler {
    pub fn new(design: &DesignPair, y: &DVector<f64>, prior: &PriorConfig) -> Result<Self> {
        let n = design.n();
        check_labels(y, n)?;
        prior.validate()?;
        if design.m() == 0 {
            return Err(Error::Dimension(
                "sparse sampler needs at least one selectable column".to_string(),
            ));
        }
        Ok(Self {
            x: design.x.clone(),
            z: design.z.clone(),
            y: y.clone(),
            p: design.p(),
            m: design.m(),
            prior: prior.clone(),
            logit_rho: logit(prior.rho)?,
            theta: DVector::zeros(design.p() + design.m()),
            gamma: DVector::from_element(design.m(), 1.0),
            sigma_u2: prior.b_u / (prior.a_u + 1.0),
            a: DVector::from_element(n, 1.0),
            b: DVector::from_element(design.m(), 1.0),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Linear predictor with the current inclusion mask applied.
    pub fn linear_predictor(&self) -> DVector<f64> {
        let mut eta = if self.p > 0 {
            &self.x * self.theta.rows(0, self.p)
        } else {
            DVector::zeros(self.y.len())
        };
        for k in 0..self.m {
            if self.gamma[k] > 0.5 {
                eta += self.z.column(k) * self.theta[self.p + k];
            }
        }
        eta
    }

    /// Draw the coefficient block from its Gaussian conditional. Excluded
    /// columns see no data, so their coefficients come from the
    /// slab-and-scale prior automatically.
    pub fn draw_coefficients(&mut self, rng: &mut RngState) -> Result<()> {
        let n = self.y.len();
        let q = self.p + self.m;
        // Masked design [X, Z diag(gamma)].
        let mut c = DMatrix::zeros(n, q);
        for j in 0..self.p {
            c.column_mut(j).copy_from(&self.x.column(j));
        }
        for k in 0..self.m {
            if self.gamma[k] > 0.5 {
                c.column_mut(self.p + k).copy_from(&self.z.column(k));
            }
        }
        let w = self.a.map(|a| 1.0 / a);
        let mut prec = c.transpose() * DMatrix::from_diagonal(&w) * &c;
        for j in 0..self.p {
            prec[(j, j)] += 1.0 / self.prior.sigma2_beta;
        }
        for k in 0..self.m {
            prec[(self.p + k, self.p + k)] += self.b[k] / self.sigma_u2;
        }
        let chol = SpdChol::new(&symmetrize(&prec))?;
        let rhs = c.transpose() * self.y.component_mul(&w.add_scalar(1.0));
        let mean = chol.solve(&rhs);
        self.theta = sample_mvn_from_precision(&chol, &mean, rng)?;
        Ok(())
    }

    /// Draw the slab variance from its inverse-gamma conditional; every
    /// selectable coefficient contributes through its local scale.
    pub fn draw_variance(&mut self, rng: &mut RngState) -> Result<()> {
        let weighted: f64 = (0..self.m)
            .map(|k| self.b[k] * self.theta[self.p + k] * self.theta[self.p + k])
            .sum();
        self.sigma_u2 = sample_inverse_gamma(
            self.prior.a_u + self.m as f64 / 2.0,
            self.prior.b_u + 0.5 * weighted,
            rng,
        )?;
        Ok(())
    }

    /// Draw the augmentation variables from their GIG conditionals.
    pub fn draw_augmentation(&mut self, rng: &mut RngState) -> Result<()> {
        let eta = self.linear_predictor();
        for i in 0..self.a.len() {
            let chi = (1.0 - self.y[i] * eta[i]).powi(2).max(CHI_FLOOR);
            self.a[i] = sample_gig_half(chi, rng)?;
        }
        Ok(())
    }

    /// Draw the local scales from their inverse-Gaussian conditionals.
    pub fn draw_local_scales(&mut self, rng: &mut RngState) -> Result<()> {
        let sigma_u = self.sigma_u2.sqrt();
        for k in 0..self.m {
            let v = self.theta[self.p + k].abs();
            let mean = if v > 0.0 { (sigma_u / v).min(B_MEAN_CAP) } else { B_MEAN_CAP };
            self.b[k] = sample_inverse_gaussian(mean, 1.0, rng)?;
        }
        Ok(())
    }

    /// Log odds of including column `k`, conditional on everything else.
    pub fn inclusion_log_odds(&self, k: usize) -> f64 {
        let v = self.theta[self.p + k];
        let zk = self.z.column(k);
        // Predictor with column k removed.
        let mut r = self.linear_predictor();
        if self.gamma[k] > 0.5 {
            r -= zk * v;
        }
        let w = self.a.map(|a| 1.0 / a);
        let mut odds = self.logit_rho;
        for i in 0..self.y.len() {
            odds += v * zk[i] * (self.y[i] * (1.0 + w[i]) - w[i] * r[i])
                - 0.5 * v * v * zk[i] * zk[i] * w[i];
        }
        odds
    }

    /// Draw the inclusion indicators one at a time.
    pub fn draw_inclusions(&mut self, rng: &mut RngState) -> Result<()> {
        for k in 0..self.m {
            let prob = expit(self.inclusion_log_odds(k));
            self.gamma[k] = if rng.random::<f64>() < prob { 1.0 } else { 0.0 };
        }
        Ok(())
    }

    /// One full sweep over all blocks.
    pub fn scan(&mut self, rng: &mut RngState) -> Result<()> {
        self.draw_coefficients(rng)?;
        self.draw_variance(rng)?;
        self.draw_augmentation(rng)?;
        self.draw_local_scales(rng)?;
        self.draw_inclusions(rng)
    }
}

impl ChainSampler for GibbsSparseSampler {
    fn scan(&mut self, rng: &mut RngState) -> Result<()> {
        GibbsSparseSampler::scan(self, rng)
    }

    fn record(&self, row: &mut [f64]) {
        let q = self.p + self.m;
        for (j, v) in self.theta.iter().enumerate() {
            row[j] = *v;
        }
        for k in 0..self.m {
            row[q + k] = self.gamma[k];
            row[q + self.m + k] = self.b[k];
        }
        row[q + 2 * self.m] = self.sigma_u2;
    }

    fn aux(&self) -> &DVector<f64> {
        &self.a
    }
}

pub(crate) fn sparse_names(p: usize, m: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..p).map(|j| format!("beta[{j}]")).collect();
    names.extend((0..m).map(|k| format!("v[{k}]")));
    names.extend((0..m).map(|k| format!("gamma[{k}]")));
    names.extend((0..m).map(|k| format!("b[{k}]")));
    names.push("sigma_u2".to_string());
    names
}

/// Run a spike-and-slab chain and return the kept draws.
pub fn gibbs_sparse(
    design: &DesignPair,
    y: &DVector<f64>,
    prior: &PriorConfig,
    config: &GibbsConfig,
) -> Result<GibbsChain> {
    let mut sampler = GibbsSparseSampler::new(design, y, prior)?;
    let mut rng = RngState::from_seed_stream(config.seed, config.stream);
    let names = sparse_names(sampler.p, sampler.m);
    collect_chain(&mut sampler, &mut rng, config, names)
}

/// Posterior inclusion probabilities from a sparse chain: the mean of each
/// indicator column.
pub fn inclusion_probabilities(chain: &GibbsChain) -> DVector<f64> {
    let ks: Vec<usize> = chain
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| n.starts_with("gamma["))
        .map(|(j, _)| j)
        .collect();
    let n = chain.n_draws() as f64;
    DVector::from_iterator(ks.len(), ks.iter().map(|&j| chain.draws.column(j).sum() / n))
}

/// Posterior means of the *effective* coefficients: the always-included
/// block as-is, a per-draw `gamma * v` product for the selectable block.
pub fn effective_coefficient_means(chain: &GibbsChain) -> DVector<f64> {
    let p = chain.names.iter().filter(|n| n.starts_with("beta[")).count();
    let m = chain.names.iter().filter(|n| n.starts_with("v[")).count();
    let n = chain.n_draws() as f64;
    let mut out = DVector::zeros(p + m);
    for j in 0..p {
        out[j] = chain.draws.column(j).sum() / n;
    }
    for k in 0..m {
        let vj = p + k;
        let gj = p + m + k;
        out[p + k] = (0..chain.n_draws())
            .map(|r| chain.draws[(r, vj)] * chain.draws[(r, gj)])
            .sum::<f64>()
            / n;
    }
    out
}
