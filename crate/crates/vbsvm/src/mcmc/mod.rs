//! Gibbs samplers for the three classifier variants, sharing the
//! augmentation-variable blocking with the variational fitters.
//!
//! Each variant exposes a resumable sampler struct whose state fields are
//! public and whose [`scan`](mixed::GibbsMixedSampler::scan) method advances
//! the chain by one full sweep of conditional draws, plus a driver function
//! that runs burn-in and collects a [`GibbsChain`] of kept draws. The
//! samplers take the same [`PriorConfig`](crate::vb::PriorConfig) as the
//! variational fitters, so the two engines are directly comparable.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub mod basic;
pub mod missing;
pub mod mixed;
pub mod sparse;

pub use basic::{gibbs_basic, GibbsBasicSampler};
pub use missing::{chain_imputation_summary, gibbs_missing, GibbsMissingSampler};
pub use mixed::{gibbs_mixed, GibbsMixedSampler};
pub use sparse::{gibbs_sparse, GibbsSparseSampler};

/// Chain-length and seeding controls shared by all samplers.
#[derive(Debug, Clone, Copy)]
pub struct GibbsConfig {
    /// Sweeps discarded before collection starts.
    pub n_burn: usize,
    /// Draws kept after burn-in.
    pub n_keep: usize,
    /// Sweeps per kept draw.
    pub thin: usize,
    /// Seed for the chain's generator.
    pub seed: u64,
    /// Stream index, so replicate chains can share a seed without
    /// overlapping.
    pub stream: u64,
    /// Also store the augmentation variables as chain columns. Off by
    /// default: they cost one column per observation and are only needed
    /// for diagnostics.
    pub store_aux: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self { n_burn: 5000, n_keep: 5000, thin: 1, seed: 0, stream: 0, store_aux: false }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_keep == 0 {
            return Err(Error::Domain("n_keep must be at least 1".to_string()));
        }
        if self.thin == 0 {
            return Err(Error::Domain("thin must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Kept draws from one chain: a row per draw, a named column per parameter.
///
/// `running_mean` and `running_var` are accumulated one draw at a time
/// while the chain is collected; [`GibbsChain::summary`] recomputes the
/// same moments in a second pass over the stored draws, so the two routes
/// cross-check each other.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    pub names: Vec<String>,
    pub draws: DMatrix<f64>,
    /// Streaming per-parameter mean, updated during collection.
    pub running_mean: DVector<f64>,
    /// Streaming per-parameter sample variance, updated during collection.
    pub running_var: DVector<f64>,
}

/// Per-parameter summary of a chain: mean, spread, a central 95% interval
/// by empirical quantiles, and the effective sample size.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
    pub ess: f64,
}

impl GibbsChain {
    pub fn n_draws(&self) -> usize {
        self.draws.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.draws.ncols()
    }

    /// Column index of a named parameter.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// All draws of one parameter.
    pub fn column(&self, j: usize) -> DVector<f64> {
        self.draws.column(j).into_owned()
    }

    /// Posterior means, one per parameter.
    pub fn means(&self) -> DVector<f64> {
        let n = self.n_draws() as f64;
        DVector::from_iterator(
            self.n_params(),
            (0..self.n_params()).map(|j| self.draws.column(j).sum() / n),
        )
    }

    /// Mean, spread, central 95% interval, and effective sample size per
    /// parameter, recomputed from the stored draws in two passes.
    pub fn summary(&self) -> Vec<ParamSummary> {
        let n = self.n_draws();
        (0..self.n_params())
            .map(|j| {
                let col: Vec<f64> = self.draws.column(j).iter().copied().collect();
                let mean = col.iter().sum::<f64>() / n as f64;
                let var = if n > 1 {
                    col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
                } else {
                    0.0
                };
                let mut sorted = col.clone();
                sorted.sort_by(|a, b| a.total_cmp(b));
                ParamSummary {
                    name: self.names[j].clone(),
                    mean,
                    sd: var.sqrt(),
                    q025: quantile(&sorted, 0.025),
                    median: quantile(&sorted, 0.5),
                    q975: quantile(&sorted, 0.975),
                    ess: effective_sample_size(&col),
                }
            })
            .collect()
    }
}

/// Two-pass per-parameter summaries of a chain; see [`GibbsChain::summary`].
pub fn posterior_summary(chain: &GibbsChain) -> Vec<ParamSummary> {
    chain.summary()
}

/// Linear-interpolation quantile (the common "type 7" definition) of an
/// already-sorted slice.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty slice");
    let h = (sorted.len() as f64 - 1.0) * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Effective sample size by the initial-positive-sequence rule: sum lag
/// autocorrelations in adjacent pairs and stop at the first pair with a
/// non-positive sum. Degenerate (constant) series report their length.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let autocov = |lag: usize| -> f64 {
        (0..n - lag).map(|t| (x[t] - mean) * (x[t + lag] - mean)).sum::<f64>() / nf
    };
    let c0 = autocov(0);
    if c0 <= 0.0 {
        return nf;
    }
    let mut rho_sum = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        rho_sum += pair;
        lag += 2;
    }
    (nf / (1.0 + 2.0 * rho_sum)).min(nf)
}

/// One-sweep interface the chain collector drives.
pub(crate) trait ChainSampler {
    fn scan(&mut self, rng: &mut crate::rng::RngState) -> Result<()>;
    fn record(&self, row: &mut [f64]);
    /// Current augmentation variables, appended as columns when
    /// [`GibbsConfig::store_aux`] is set.
    fn aux(&self) -> &DVector<f64>;
}

/// Run burn-in, then collect `n_keep` thinned draws into a chain,
/// accumulating streaming moments alongside the stored rows.
pub(crate) fn collect_chain<S: ChainSampler>(
    sampler: &mut S,
    rng: &mut crate::rng::RngState,
    config: &GibbsConfig,
    mut names: Vec<String>,
) -> Result<GibbsChain> {
    config.validate()?;
    let n_base = names.len();
    let n_aux = if config.store_aux { sampler.aux().len() } else { 0 };
    names.extend((0..n_aux).map(|i| format!("a[{i}]")));
    let n_params = n_base + n_aux;

    let mut draws = DMatrix::zeros(config.n_keep, n_params);
    let mut row = vec![0.0; n_params];
    let mut mean = DVector::zeros(n_params);
    let mut m2 = DVector::zeros(n_params);
    for _ in 0..config.n_burn {
        sampler.scan(rng)?;
    }
    for k in 0..config.n_keep {
        for _ in 0..config.thin {
            sampler.scan(rng)?;
        }
        sampler.record(&mut row[..n_base]);
        if n_aux > 0 {
            let a = sampler.aux();
            row[n_base..].copy_from_slice(a.as_slice());
        }
        for (j, &v) in row.iter().enumerate() {
            draws[(k, j)] = v;
            // Streaming moment update.
            let delta = v - mean[j];
            mean[j] += delta / (k as f64 + 1.0);
            m2[j] += delta * (v - mean[j]);
        }
    }
    let denom = (config.n_keep as f64 - 1.0).max(1.0);
    Ok(GibbsChain { names, draws, running_mean: mean, running_var: m2 / denom })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn quantile_reference_values() {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&data, 0.0), 1.0);
        assert_eq!(quantile(&data, 0.25), 2.0);
        assert_eq!(quantile(&data, 0.5), 3.0);
        assert_eq!(quantile(&data, 1.0), 5.0);
        // Interpolated case: h = 3 * 0.3 = 0.9.
        let data = [10.0, 20.0, 30.0, 40.0];
        assert!((quantile(&data, 0.3) - 19.0).abs() < 1e-12);
        // Single point.
        assert_eq!(quantile(&[7.0], 0.4), 7.0);
    }

    #[test]
    fn ess_iid_near_n_and_ar1_reduced() {
        let mut rng = RngState::from_seed(3);
        let n = 20_000;
        let iid: Vec<f64> =
            (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let ess = effective_sample_size(&iid);
        assert!(ess > 0.8 * n as f64, "iid ESS {ess} too small");

        // AR(1) with coefficient 0.9 has ESS/n near (1-0.9)/(1+0.9).
        let mut x = 0.0;
        let ar: Vec<f64> = (0..n)
            .map(|_| {
                x = 0.9 * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect();
        let ess_ar = effective_sample_size(&ar);
        let expect = n as f64 * 0.1 / 1.9;
        assert!(
            ess_ar > 0.5 * expect && ess_ar < 2.0 * expect,
            "AR(1) ESS {ess_ar}, expected near {expect}"
        );

        // Constant series degrades gracefully.
        assert_eq!(effective_sample_size(&vec![2.5; 100]), 100.0);
    }

    #[test]
    fn config_validation() {
        assert!(GibbsConfig { n_keep: 0, ..Default::default() }.validate().is_err());
        assert!(GibbsConfig { thin: 0, ..Default::default() }.validate().is_err());
        assert!(GibbsConfig::default().validate().is_ok());
    }

    #[test]
    fn chain_summary_shapes() {
        let names = vec!["a".to_string(), "b".to_string()];
        let draws = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0]);
        let chain = GibbsChain {
            names,
            draws,
            running_mean: DVector::from_vec(vec![2.5, 0.0]),
            running_var: DVector::from_vec(vec![5.0 / 3.0, 0.0]),
        };
        assert_eq!(chain.n_draws(), 4);
        assert_eq!(chain.index_of("b"), Some(1));
        assert_eq!(chain.index_of("c"), None);
        let means = chain.means();
        assert!((means[0] - 2.5).abs() < 1e-12);
        let summary = posterior_summary(&chain);
        assert_eq!(summary.len(), 2);
        assert!((summary[0].median - 2.5).abs() < 1e-12);
        assert_eq!(summary[1].sd, 0.0);
    }

    /// Deterministic stand-in sampler: the "draw" is a fixed function of a
    /// step counter, so collection behavior can be checked exactly.
    struct CountingSampler {
        step: usize,
        aux: DVector<f64>,
    }

    impl ChainSampler for CountingSampler {
        fn scan(&mut self, _rng: &mut RngState) -> Result<()> {
            self.step += 1;
            self.aux[0] = self.step as f64 * 10.0;
            Ok(())
        }

        fn record(&self, row: &mut [f64]) {
            row[0] = self.step as f64;
            row[1] = (self.step as f64).sin();
        }

        fn aux(&self) -> &DVector<f64> {
            &self.aux
        }
    }

    #[test]
    fn streaming_moments_match_two_pass_summary() {
        let mut sampler = CountingSampler { step: 0, aux: DVector::zeros(1) };
        let mut rng = RngState::from_seed(0);
        let config =
            GibbsConfig { n_burn: 3, n_keep: 50, thin: 2, store_aux: true, ..Default::default() };
        let names = vec!["x".to_string(), "y".to_string()];
        let chain = collect_chain(&mut sampler, &mut rng, &config, names).unwrap();

        // store_aux appended a named column.
        assert_eq!(chain.names, vec!["x", "y", "a[0]"]);
        assert_eq!(chain.n_params(), 3);
        // Burn-in and thinning: first kept step is 3 + 2 = 5, then +2 each.
        assert_eq!(chain.draws[(0, 0)], 5.0);
        assert_eq!(chain.draws[(1, 0)], 7.0);
        assert_eq!(chain.draws[(0, 2)], 50.0);

        // Streaming moments agree with the two-pass summary.
        let summary = chain.summary();
        for j in 0..3 {
            assert!((chain.running_mean[j] - summary[j].mean).abs() < 1e-12);
            assert!((chain.running_var[j].sqrt() - summary[j].sd).abs() < 1e-12);
        }
    }
}
