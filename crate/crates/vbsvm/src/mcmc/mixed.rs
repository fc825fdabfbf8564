//! Gibbs sampler for the mixed-design classifier: fixed-effect block with a
//! fixed prior variance, random-effect block with an inverse-gamma variance,
//! and one augmentation variable per observation.

use nalgebra::{DMatrix, DVector};

use crate::data::DesignPair;
use crate::dist::{sample_gig_half, sample_inverse_gamma, sample_mvn_from_precision};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdChol};
use crate::rng::RngState;
use crate::vb::{check_labels, PriorConfig, CHI_FLOOR};

use super::{collect_chain, ChainSampler, GibbsChain, GibbsConfig};

/// Resumable Gibbs state for the mixed-design classifier.
///
/// All state fields are public so diagnostics and exactness tests can freeze
/// or overwrite individual blocks between scans.
#[derive(Debug, Clone)]
pub struct GibbsMixedSampler {
    c: DMatrix<f64>,
    /// Labels; mutable so joint-distribution tests can redraw them.
    pub y: DVector<f64>,
    p: usize,
    m: usize,
    prior: PriorConfig,
    /// Stacked coefficients: fixed block then random block.
    pub theta: DVector<f64>,
    /// Random-effect variance.
    pub sigma_u2: f64,
    /// Augmentation variables, one per observation.
    pub a: DVector<f64>,
}

impl GibbsMixedSampler {
    pub fn new(design: &DesignPair, y: &DVector<f64>, prior: &PriorConfig) -> Result<Self> {
        let n = design.n();
        check_labels(y, n)?;
        prior.validate()?;
        if design.m() == 0 {
            return Err(Error::Dimension(
                "mixed sampler needs at least one random-effect column".to_string(),
            ));
        }
        Ok(Self {
            c: design.combined(),
            y: y.clone(),
            p: design.p(),
            m: design.m(),
            prior: prior.clone(),
            theta: DVector::zeros(design.p() + design.m()),
            // Prior mode of the inverse-gamma variance.
            sigma_u2: prior.b_u / (prior.a_u + 1.0),
            a: DVector::from_element(n, 1.0),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Linear predictor at the current coefficients.
    pub fn linear_predictor(&self) -> DVector<f64> {
        &self.c * &self.theta
    }

    /// Draw the coefficient block from its Gaussian conditional.
    pub fn draw_coefficients(&mut self, rng: &mut RngState) -> Result<()> {
        let w = self.a.map(|a| 1.0 / a);
        let mut prec = self.c.transpose() * DMatrix::from_diagonal(&w) * &self.c;
        for j in 0..self.p {
            prec[(j, j)] += 1.0 / self.prior.sigma2_beta;
        }
        for j in self.p..self.p + self.m {
            prec[(j, j)] += 1.0 / self.sigma_u2;
        }
        let chol = SpdChol::new(&symmetrize(&prec))?;
        let rhs = self.c.transpose() * self.y.component_mul(&w.add_scalar(1.0));
        let mean = chol.solve(&rhs);
        self.theta = sample_mvn_from_precision(&chol, &mean, rng)?;
        Ok(())
    }

    /// Draw the random-effect variance from its inverse-gamma conditional.
    pub fn draw_variance(&mut self, rng: &mut RngState) -> Result<()> {
        let u_sq: f64 = (self.p..self.p + self.m).map(|j| self.theta[j] * self.theta[j]).sum();
        self.sigma_u2 = sample_inverse_gamma(
            self.prior.a_u + self.m as f64 / 2.0,
            self.prior.b_u + 0.5 * u_sq,
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

    /// One full sweep over all blocks.
    pub fn scan(&mut self, rng: &mut RngState) -> Result<()> {
        self.draw_coefficients(rng)?;
        self.draw_variance(rng)?;
        self.draw_augmentation(rng)
    }
}

impl ChainSampler for GibbsMixedSampler {
    fn scan(&mut self, rng: &mut RngState) -> Result<()> {
        GibbsMixedSampler::scan(self, rng)
    }

    fn record(&self, row: &mut [f64]) {
        for (j, v) in self.theta.iter().enumerate() {
            row[j] = *v;
        }
        row[self.theta.len()] = self.sigma_u2;
    }

    fn aux(&self) -> &DVector<f64> {
        &self.a
    }
}

/// Parameter names for a mixed chain: the coefficients then the variance.
pub(crate) fn mixed_names(p: usize, m: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..p).map(|j| format!("beta[{j}]")).collect();
    names.extend((0..m).map(|j| format!("u[{j}]")));
    names.push("sigma_u2".to_string());
    names
}

/// Run a mixed-design chain and return the kept draws.
pub fn gibbs_mixed(
    design: &DesignPair,
    y: &DVector<f64>,
    prior: &PriorConfig,
    config: &GibbsConfig,
) -> Result<GibbsChain> {
    let mut sampler = GibbsMixedSampler::new(design, y, prior)?;
    let mut rng = RngState::from_seed_stream(config.seed, config.stream);
    let names = mixed_names(sampler.p, sampler.m);
    collect_chain(&mut sampler, &mut rng, config, names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;
    use crate::simulate::simulate_logistic;

    fn small_design(n: usize, m: usize, seed: u64) -> (DesignPair, DVector<f64>) {
        let mut rng = RngState::from_seed(seed);
        let sim = simulate_logistic(n, m, &mut rng).unwrap();
        let design =
            DesignPair::new(DMatrix::from_element(n, 1, 1.0), sim.data.features.clone())
                .unwrap();
        (design, sim.data.labels.clone())
    }

    #[test]
    fn coefficient_conditional_matches_closed_form() {
        // Freeze the augmentation variables and the variance; the
        // coefficient draws must then average to the conditional mean with
        // the conditional variance on the diagonal.
        let (design, y) = small_design(12, 2, 5);
        let prior =
            PriorConfig { sigma2_beta: 4.0, a_u: 3.0, b_u: 2.0, ..PriorConfig::default() };
        let mut s = GibbsMixedSampler::new(&design, &y, &prior).unwrap();
        let mut rng = RngState::from_seed(11);
        for i in 0..12 {
            s.a[i] = 0.5 + 0.1 * i as f64;
        }
        s.sigma_u2 = 1.5;

        let w = s.a.map(|a| 1.0 / a);
        let c = design.combined();
        let mut prec = c.transpose() * DMatrix::from_diagonal(&w) * &c;
        prec[(0, 0)] += 1.0 / 4.0;
        for j in 1..3 {
            prec[(j, j)] += 1.0 / 1.5;
        }
        let chol = SpdChol::new(&prec).unwrap();
        let mean = chol.solve(&(c.transpose() * y.component_mul(&w.add_scalar(1.0))));
        let cov = chol.inverse();

        let n_draws = 60_000;
        let mut sums = DVector::zeros(3);
        let mut sq0 = 0.0;
        for _ in 0..n_draws {
            s.draw_coefficients(&mut rng).unwrap();
            sums += &s.theta;
            sq0 += (s.theta[0] - mean[0]) * (s.theta[0] - mean[0]);
        }
        let emp_mean = sums / n_draws as f64;
        for j in 0..3 {
            let se = (cov[(j, j)] / n_draws as f64).sqrt();
            assert!(
                (emp_mean[j] - mean[j]).abs() < 5.0 * se,
                "coefficient {j}: {} vs {}",
                emp_mean[j],
                mean[j]
            );
        }
        let emp_var0 = sq0 / n_draws as f64;
        let se_var = cov[(0, 0)] * (2.0f64 / n_draws as f64).sqrt();
        assert!((emp_var0 - cov[(0, 0)]).abs() < 5.0 * se_var);
    }

    #[test]
    fn variance_conditional_matches_closed_form() {
        // Freeze the random effects; 1/sigma_u2 is then gamma with known
        // mean shape/rate.
        let (design, y) = small_design(10, 3, 7);
        let prior = PriorConfig { a_u: 3.0, b_u: 2.0, ..PriorConfig::default() };
        let mut s = GibbsMixedSampler::new(&design, &y, &prior).unwrap();
        let mut rng = RngState::from_seed(13);
        s.theta[1] = 0.8;
        s.theta[2] = -0.6;
        s.theta[3] = 0.3;
        let shape = 3.0 + 1.5;
        let rate = 2.0 + 0.5 * (0.64 + 0.36 + 0.09);

        let n_draws = 60_000;
        let mut inv_sum = 0.0;
        let mut sum = 0.0;
        for _ in 0..n_draws {
            s.draw_variance(&mut rng).unwrap();
            inv_sum += 1.0 / s.sigma_u2;
            sum += s.sigma_u2;
        }
        let inv_mean = inv_sum / n_draws as f64;
        let se_inv = (shape / (rate * rate) / n_draws as f64).sqrt();
        assert!((inv_mean - shape / rate).abs() < 5.0 * se_inv);
        // Mean of the variance itself: rate / (shape - 1), finite here.
        let mean = sum / n_draws as f64;
        let var_ig = (rate / (shape - 1.0)).powi(2) / (shape - 2.0);
        assert!((mean - rate / (shape - 1.0)).abs() < 5.0 * (var_ig / n_draws as f64).sqrt());
    }

    #[test]
    fn augmentation_conditional_matches_gig_moments() {
        // Freeze the coefficients; each a_i is GIG with closed-form mean
        // sqrt(chi) + 1 and mean-inverse 1/sqrt(chi).
        let (design, y) = small_design(6, 1, 9);
        let prior = PriorConfig::default();
        let mut s = GibbsMixedSampler::new(&design, &y, &prior).unwrap();
        let mut rng = RngState::from_seed(17);
        s.theta = DVector::from_vec(vec![0.4, -0.7]);
        let eta = s.linear_predictor();

        let n_draws = 40_000;
        let mut sums = vec![0.0; 6];
        let mut inv_sums = vec![0.0; 6];
        for _ in 0..n_draws {
            s.draw_augmentation(&mut rng).unwrap();
            for i in 0..6 {
                sums[i] += s.a[i];
                inv_sums[i] += 1.0 / s.a[i];
            }
        }
        for i in 0..6 {
            let chi = (1.0 - y[i] * eta[i]).powi(2).max(CHI_FLOOR);
            let mean = sums[i] / n_draws as f64;
            let inv_mean = inv_sums[i] / n_draws as f64;
            // Second moment chi + 3 sqrt(chi) + 3 gives variance
            // sqrt(chi) + 2; the reciprocal is inverse-Gaussian with
            // variance chi^{-3/2}.
            let se = ((chi.sqrt() + 2.0) / n_draws as f64).sqrt();
            assert!((mean - (chi.sqrt() + 1.0)).abs() < 6.0 * se, "row {i} mean");
            let se_inv = (chi.powf(-0.75)) / (n_draws as f64).sqrt();
            assert!((inv_mean - 1.0 / chi.sqrt()).abs() < 6.0 * se_inv, "row {i} inverse");
        }
    }

    #[test]
    fn zero_effects_variance_conditional() {
        // With all random effects zero the variance conditional is the
        // prior with only the shape bumped: IG(a_u + m/2, b_u).
        let (design, y) = small_design(10, 3, 15);
        let prior = PriorConfig { a_u: 3.0, b_u: 2.0, ..PriorConfig::default() };
        let mut s = GibbsMixedSampler::new(&design, &y, &prior).unwrap();
        let mut rng = RngState::from_seed(27);
        // theta starts at zero; keep it there.
        let (shape, rate) = (3.0 + 1.5, 2.0);
        let n_draws = 50_000;
        let mut sum = 0.0;
        for _ in 0..n_draws {
            s.draw_variance(&mut rng).unwrap();
            sum += s.sigma_u2;
        }
        let mean = sum / n_draws as f64;
        let expect = rate / (shape - 1.0);
        let var = expect * expect / (shape - 2.0);
        assert!((mean - expect).abs() < 4.0 * (var / n_draws as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn margin_two_augmentation_mean_inverse() {
        // One observation with residual 1 - y*eta = 2: the augmentation
        // conditional has chi = 4 and mean inverse 1/2.
        let design = DesignPair::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let y = DVector::from_element(1, 1.0);
        let mut s = GibbsMixedSampler::new(&design, &y, &PriorConfig::default()).unwrap();
        let mut rng = RngState::from_seed(35);
        s.theta = DVector::from_vec(vec![-0.25, -0.75]);
        let n_draws = 100_000;
        let mut inv_sum = 0.0;
        for _ in 0..n_draws {
            s.draw_augmentation(&mut rng).unwrap();
            inv_sum += 1.0 / s.a[0];
        }
        let inv_mean = inv_sum / n_draws as f64;
        // Var(1/a) = chi^{-3/2} = 1/8.
        let se = (0.125f64 / n_draws as f64).sqrt();
        assert!((inv_mean - 0.5).abs() < 4.0 * se, "mean inverse {inv_mean}");
    }

    #[test]
    fn chain_reproducibility_and_shape() {
        let (design, y) = small_design(20, 2, 21);
        let prior = PriorConfig::default();
        let config =
            GibbsConfig { n_burn: 50, n_keep: 40, thin: 2, seed: 9, stream: 1, ..Default::default() };
        let chain1 = gibbs_mixed(&design, &y, &prior, &config).unwrap();
        let chain2 = gibbs_mixed(&design, &y, &prior, &config).unwrap();
        assert_eq!(chain1.draws, chain2.draws);
        assert_eq!(chain1.names, vec!["beta[0]", "u[0]", "u[1]", "sigma_u2"]);
        assert_eq!(chain1.n_draws(), 40);

        let other = gibbs_mixed(&design, &y, &prior, &GibbsConfig { stream: 2, ..config })
            .unwrap();
        assert_ne!(chain1.draws, other.draws);

        // The variance column stays positive.
        let j = chain1.index_of("sigma_u2").unwrap();
        assert!(chain1.column(j).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn posterior_tracks_strong_signal() {
        // With a large, clean effect the posterior mean coefficient should
        // land on the right side decisively.
        let n = 150;
        let mut rng = RngState::from_seed(33);
        let mut features = DMatrix::zeros(n, 1);
        let mut labels = DVector::zeros(n);
        for i in 0..n {
            let x = rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal);
            features[(i, 0)] = x;
            labels[i] = if 2.0 * x > 0.0 { 1.0 } else { -1.0 };
        }
        // Break perfect separation so the posterior stays concentrated.
        for i in (0..n).step_by(9) {
            labels[i] = -labels[i];
        }
        let design =
            DesignPair::new(DMatrix::from_element(n, 1, 1.0), features).unwrap();
        let config =
            GibbsConfig { n_burn: 500, n_keep: 1000, thin: 1, seed: 4, ..Default::default() };
        let chain = gibbs_mixed(&design, &labels, &PriorConfig::default(), &config).unwrap();
        let means = chain.means();
        let ju = chain.index_of("u[0]").unwrap();
        assert!(means[ju] > 0.5, "slope posterior mean {}", means[ju]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (design, y) = small_design(8, 1, 2);
        let bad = DVector::from_element(8, 0.5);
        assert!(GibbsMixedSampler::new(&design, &bad, &PriorConfig::default()).is_err());
        let x_only = DesignPair::new(DMatrix::from_element(8, 2, 1.0), DMatrix::zeros(8, 0))
            .unwrap();
        assert!(GibbsMixedSampler::new(&x_only, &y, &PriorConfig::default()).is_err());
    }
}
