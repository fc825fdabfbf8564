//! Mean-field variational fitters for the hinge-loss classifier family.
//!
//! All four fitters share the same skeleton: coordinate ascent on a
//! marginal-likelihood lower bound, with the latent augmentation variables
//! `a_i` integrated out through their generalized-inverse-Gaussian optimum.
//! Each sweep updates every variational factor once in a fixed order and
//! ends by evaluating the bound; the bound trace is monotone up to floating
//! point, which the tests enforce.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub mod basic;
pub mod missing;
pub mod mixed;
pub mod sparse;

pub use basic::{decision_values, fit_vb_basic, lower_bound_basic, predict_linear, VbBasicState};
pub use missing::{
    build_missing_pattern, conditional_fill_rows, fit_vb_missing, impute, lower_bound_missing,
    predict_missing, MissingPattern, VbMissingState,
};
pub use mixed::{fit_vb_mixed, implied_penalty, lower_bound_mixed, predict_mixed, VbMixedState};
pub use sparse::{
    fit_vb_sparse, lower_bound_sparse, masked_precision, predict_sparse, select_variables,
    VbSparseState,
};

/// Lower clamp for the GIG parameter `chi`; keeps `E[1/a] = chi^{-1/2}`
/// finite when a margin residual collapses to zero.
pub const CHI_FLOOR: f64 = 1e-10;

/// Clamp for the sparse inclusion log-odds; `expit(±35)` is still inside the
/// open interval (0, 1) so entropy terms stay finite.
pub const GAMMA_LOGIT_CLAMP: f64 = 35.0;

/// Stopping rule for the coordinate-ascent loop.
#[derive(Debug, Clone, Copy)]
pub struct SolverControls {
    /// Threshold on the per-sweep lower-bound increase.
    pub tol: f64,
    /// Hard cap on sweeps; hitting it flags the fit as non-converged.
    pub max_iter: usize,
    /// Interpret `tol` relative to the bound magnitude instead of absolutely.
    pub relative: bool,
}

impl Default for SolverControls {
    fn default() -> Self {
        SolverControls {
            tol: 1e-10,
            max_iter: 5000,
            relative: false,
        }
    }
}

impl SolverControls {
    /// True when the bound improvement from `prev` to `cur` is below
    /// tolerance.
    pub fn converged(&self, prev: f64, cur: f64) -> bool {
        let delta = cur - prev;
        if self.relative {
            delta < self.tol * cur.abs().max(1.0)
        } else {
            delta < self.tol
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Hyperparameters shared by the model family. Every fitter reads only the
/// fields relevant to it; defaults are the diffuse settings used throughout
/// the crate's experiments.
#[derive(Debug, Clone)]
pub struct PriorConfig {
    /// Fixed-effect prior variance.
    pub sigma2_beta: f64,
    /// Inverse-gamma shape for the random-effect variance.
    pub a_u: f64,
    /// Inverse-gamma rate for the random-effect variance.
    pub b_u: f64,
    /// Prior inclusion probability for spike-and-slab coefficients.
    pub rho: f64,
    /// Prior variance for the imputation-model mean.
    pub sigma2_mu: f64,
    /// Inverse-Wishart scale for the imputation-model covariance; `None`
    /// means `0.01 I_d` built at fit time.
    pub psi: Option<DMatrix<f64>>,
    /// Inverse-Wishart degrees of freedom; `None` means `max(3, d + 1)`,
    /// the smallest proper choice with a margin for small `d`.
    pub nu: Option<f64>,
    /// Coordinate-ascent stopping rule.
    pub solver: SolverControls,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            sigma2_beta: 1e8,
            a_u: 0.01,
            b_u: 0.01,
            rho: 0.01,
            sigma2_mu: 1e8,
            psi: None,
            nu: None,
            solver: SolverControls::default(),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_beta > 0.0) {
            return Err(Error::Domain(format!(
                "sigma2_beta must be > 0, got {}",
                self.sigma2_beta
            )));
        }
        if !(self.a_u > 0.0 && self.b_u > 0.0) {
            return Err(Error::Domain(format!(
                "a_u and b_u must be > 0, got {} and {}",
                self.a_u, self.b_u
            )));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Domain(format!(
                "rho must lie in (0, 1), got {}",
                self.rho
            )));
        }
        if !(self.sigma2_mu > 0.0) {
            return Err(Error::Domain(format!(
                "sigma2_mu must be > 0, got {}",
                self.sigma2_mu
            )));
        }
        self.solver.validate()
    }

    /// The inverse-Wishart degrees of freedom for a `d`-column imputation
    /// model; must exceed `d - 1` for the prior to be proper.
    pub fn resolve_nu(&self, d: usize) -> Result<f64> {
        let nu = self.nu.unwrap_or((d as f64 + 1.0).max(3.0));
        if !(nu > d as f64 - 1.0) {
            return Err(Error::Domain(format!(
                "nu = {nu} must exceed d - 1 = {}",
                d as f64 - 1.0
            )));
        }
        Ok(nu)
    }

    /// The inverse-Wishart scale for a `d`-column imputation model.
    pub fn psi_matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        match &self.psi {
            Some(m) => {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::Dimension(format!(
                        "psi is {}x{} but data has {d} predictor columns",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                Ok(m.clone())
            }
            None => Ok(DMatrix::identity(d, d) * 0.01),
        }
    }
}

/// Validate a -1/+1 label vector against a design row count.
pub(crate) fn check_labels(y: &DVector<f64>, n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "{} labels for {} design rows",
            y.len(),
            n
        )));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Data("labels must be -1 or +1".to_string()));
    }
    Ok(())
}

/// `sum_i log K_{1/2}(sqrt(chi_i))`, the bound's Bessel block.
pub(crate) fn sum_log_k_half(chi: &DVector<f64>) -> Result<f64> {
    let mut s = 0.0;
    for &c in chi.iter() {
        s += crate::special::log_bessel_k_half(c.sqrt())?;
    }
    Ok(s)
}

/// Floor the chi vector in place and return `E[1/a] = chi^{-1/2}`.
pub(crate) fn chi_to_mean_inv_a(chi: &mut DVector<f64>) -> DVector<f64> {
    for c in chi.iter_mut() {
        if *c < CHI_FLOOR {
            *c = CHI_FLOOR;
        }
    }
    DVector::from_iterator(chi.len(), chi.iter().map(|&c| c.sqrt().recip()))
}

/// Shared guard: a non-finite bound value is a numerical failure tagged with
/// the sweep index.
pub(crate) fn guard_finite(lb: f64, sweep: usize) -> Result<f64> {
    if lb.is_finite() {
        Ok(lb)
    } else {
        Err(Error::numerical_at("non-finite lower bound", sweep))
    }
}
