//! Gibbs sampler for the fixed-penalty classifier: coefficient block with a
//! fixed Gaussian prior of precision `4 * alpha`, and one augmentation
//! variable per observation. This is the mixed-design sampler with the
//! random-effect block (and its variance conditional) removed.

use nalgebra::{DMatrix, DVector};

use crate::dist::{sample_gig_half, sample_mvn_from_precision};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdChol};
use crate::rng::RngState;
use crate::vb::{check_labels, CHI_FLOOR};

use super::{collect_chain, ChainSampler, GibbsChain, GibbsConfig};

/// Resumable Gibbs state for the fixed-penalty classifier.
///
/// All state fields are public so diagnostics and exactness tests can freeze
/// or overwrite individual blocks between scans.
#[derive(Debug, Clone)]
pub struct GibbsBasicSampler {
    x: DMatrix<f64>,
    pub y: DVector<f64>,
    p: usize,
    alpha: f64,
    /// Coefficient vector.
    pub beta: DVector<f64>,
    /// Augmentation variables, one per observation.
    pub a: DVector<f64>,
}

impl GibbsBasicSampler {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n == 0 || p == 0 {
            return Err(Error::Dimension(format!(
                "design must be nonempty, got {n}x{p}"
            )));
        }
        check_labels(y, n)?;
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self {
            x: x.clone(),
            y: y.clone(),
            p,
            alpha,
            beta: DVector::zeros(p),
            a: DVector::from_element(n, 1.0),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Linear predictor at the current coefficients.
    pub fn linear_predictor(&self) -> DVector<f64> {
        &self.x * &self.beta
    }

    /// Draw the coefficient block from its Gaussian conditional.
    pub fn draw_coefficients(&mut self, rng: &mut RngState) -> Result<()> {
        let w = self.a.map(|a| 1.0 / a);
        let mut prec = self.x.transpose() * DMatrix::from_diagonal(&w) * &self.x;
        for j in 0..self.p {
            prec[(j, j)] += 4.0 * self.alpha;
        }
        let chol = SpdChol::new(&symmetrize(&prec))?;
        let rhs = self.x.transpose() * self.y.component_mul(&w.add_scalar(1.0));
        let mean = chol.solve(&rhs);
        self.beta = sample_mvn_from_precision(&chol, &mean, rng)?;
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

    /// One full sweep over both blocks.
    pub fn scan(&mut self, rng: &mut RngState) -> Result<()> {
        self.draw_coefficients(rng)?;
        self.draw_augmentation(rng)
    }
}

impl ChainSampler for GibbsBasicSampler {
    fn scan(&mut self, rng: &mut RngState) -> Result<()> {
        GibbsBasicSampler::scan(self, rng)
    }

    fn record(&self, row: &mut [f64]) {
        for (j, v) in self.beta.iter().enumerate() {
            row[j] = *v;
        }
    }

    fn aux(&self) -> &DVector<f64> {
        &self.a
    }
}

/// Parameter names for a basic chain: the coefficients only.
pub(crate) fn basic_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("beta[{j}]")).collect()
}

/// Run a fixed-penalty chain and return the kept draws.
pub fn gibbs_basic(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    config: &GibbsConfig,
) -> Result<GibbsChain> {
    let mut sampler = GibbsBasicSampler::new(x, y, alpha)?;
    let mut rng = RngState::from_seed_stream(config.seed, config.stream);
    let names = basic_names(sampler.p);
    collect_chain(&mut sampler, &mut rng, config, names)
}
