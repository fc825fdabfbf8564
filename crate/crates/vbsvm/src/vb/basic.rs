//! Variational fitter for the fixed-penalty linear classifier.
//!
//! The model places an isotropic normal prior with precision `4 alpha` on
//! the coefficient vector and represents the hinge likelihood through its
//! normal scale-mixture augmentation. The mean-field optimum is found by
//! cycling three closed-form updates (coefficients, augmentation means,
//! mixing weights) until the marginal-likelihood lower bound stalls.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{diag_quadform, symmetrize, SpdChol};

use super::{check_labels, chi_to_mean_inv_a, guard_finite, sum_log_k_half, SolverControls};

/// Converged variational state for the fixed-penalty classifier.
#[derive(Debug, Clone)]
pub struct VbBasicState {
    /// Posterior mean of the coefficient vector.
    pub mu: DVector<f64>,
    /// Posterior covariance of the coefficient vector.
    pub sigma: DMatrix<f64>,
    /// Augmentation parameters, one per row (already floored).
    pub chi: DVector<f64>,
    /// `E[1/a_i]`, the working weights.
    pub mu_a_inv: DVector<f64>,
    /// Ridge penalty the fit was run with.
    pub alpha: f64,
    /// Lower-bound value after each sweep.
    pub lb_trace: Vec<f64>,
    /// False when the sweep cap was hit before the tolerance.
    pub converged: bool,
}

impl VbBasicState {
    /// Final lower bound (the last trace entry).
    pub fn final_lower_bound(&self) -> f64 {
        *self.lb_trace.last().expect("fit always records at least one sweep")
    }
}

/// Fit the fixed-penalty classifier by coordinate ascent.
///
/// `init` optionally warm-starts the working weights `E[1/a]` (default: all
/// ones). The returned state is stationary to within the solver tolerance;
/// if `ctrl.max_iter` is reached first, the state is still returned with
/// `converged = false`.
pub fn fit_vb_basic(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    ctrl: &SolverControls,
    init: Option<&DVector<f64>>,
) -> Result<VbBasicState> {
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
    ctrl.validate()?;
    let mut mu_a_inv = match init {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Dimension(format!(
                    "init weight vector has length {}, need {n}",
                    w.len()
                )));
            }
            if w.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Domain(
                    "init weights must be strictly positive".to_string(),
                ));
            }
            w.clone()
        }
        None => DVector::from_element(n, 1.0),
    };

    let xt = x.transpose();
    let mut lb_trace = Vec::new();
    let mut converged = false;
    let mut state: Option<(DVector<f64>, DMatrix<f64>, DVector<f64>)> = None;

    for sweep in 0..ctrl.max_iter {
        // Coefficient block: precision X^T W X + 4 alpha I.
        let mut prec = &xt * DMatrix::from_diagonal(&mu_a_inv) * x;
        for j in 0..p {
            prec[(j, j)] += 4.0 * alpha;
        }
        let chol = SpdChol::new(&symmetrize(&prec))
            .map_err(|e| Error::numerical_at(format!("coefficient update: {e}"), sweep))?;
        let rhs = &xt * y.component_mul(&mu_a_inv.add_scalar(1.0));
        let mu = chol.solve(&rhs);
        let sigma = chol.inverse();
        let ln_det_sigma = -chol.ln_det();

        // Augmentation block: chi_i = (1 - y_i x_i mu)^2 + x_i Sigma x_i.
        let fitted = x * &mu;
        let quad = diag_quadform(x, &sigma);
        let mut chi = DVector::from_fn(n, |i, _| {
            let r = 1.0 - y[i] * fitted[i];
            r * r + quad[i]
        });
        mu_a_inv = chi_to_mean_inv_a(&mut chi);

        // Bound at the now-consistent state.
        let lb = lower_bound_parts(
            p,
            n,
            alpha,
            ln_det_sigma,
            mu.norm_squared() + sigma.trace(),
            y.dot(&fitted),
            &chi,
        )?;
        let lb = guard_finite(lb, sweep)?;
        let prev = lb_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        lb_trace.push(lb);
        state = Some((mu, sigma, chi));
        if ctrl.converged(prev, lb) {
            converged = true;
            break;
        }
    }

    let (mu, sigma, chi) = state.expect("max_iter >= 1 guarantees at least one sweep");
    Ok(VbBasicState {
        mu,
        sigma,
        chi,
        mu_a_inv,
        alpha,
        lb_trace,
        converged,
    })
}

/// Marginal-likelihood lower bound recomputed from a stored state.
///
/// Matches the last `lb_trace` entry of the fit that produced the state.
pub fn lower_bound_basic(
    state: &VbBasicState,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    check_labels(y, n)?;
    if state.mu.len() != p || state.chi.len() != n {
        return Err(Error::Dimension(
            "state does not match design dimensions".to_string(),
        ));
    }
    let chol = SpdChol::new(&state.sigma)?;
    let fitted = x * &state.mu;
    lower_bound_parts(
        p,
        n,
        state.alpha,
        chol.ln_det(),
        state.mu.norm_squared() + state.sigma.trace(),
        y.dot(&fitted),
        &state.chi,
    )
}

/// The bound, assembled from its sufficient pieces. `ln_det_sigma` is
/// `ln |Sigma_q|`, `coef_sq` is `||mu||^2 + tr(Sigma_q)`, `fit_term` is
/// `y^T X mu`.
fn lower_bound_parts(
    p: usize,
    n: usize,
    alpha: f64,
    ln_det_sigma: f64,
    coef_sq: f64,
    fit_term: f64,
    chi: &DVector<f64>,
) -> Result<f64> {
    let nf = n as f64;
    let pf = p as f64;
    Ok(pf / 2.0 - nf + nf * std::f64::consts::LN_2
        - nf / 2.0 * (2.0 * std::f64::consts::PI).ln()
        + pf / 2.0 * (4.0 * alpha).ln()
        + 0.5 * ln_det_sigma
        - 2.0 * alpha * coef_sq
        + fit_term
        + 0.25 * chi.iter().map(|&c| c.ln()).sum::<f64>()
        + sum_log_k_half(chi)?)
}

/// Real-valued classifier scores `x_i^T coef` for new rows.
pub fn decision_values(coef: &DVector<f64>, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x_new.ncols() != coef.len() {
        return Err(Error::Dimension(format!(
            "{} columns in new data but {} coefficients",
            x_new.ncols(),
            coef.len()
        )));
    }
    Ok(x_new * coef)
}

/// Hard -1/+1 labels for new rows; a score of exactly zero maps to +1.
pub fn predict_linear(coef: &DVector<f64>, x_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    let scores = decision_values(coef, x_new)?;
    Ok(scores.map(|s| if s >= 0.0 { 1.0 } else { -1.0 }))
}

/// Log of the augmented-likelihood integrand at augmentation value `a > 0`
/// and margin `m = y x^T beta`; integrating `exp` of this over `a` gives the
/// hinge pseudo-likelihood `exp(-2 max(1 - m, 0))`.
pub fn hinge_mixture_log_integrand(a: f64, margin: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!(
            "augmentation variable must be positive, got {a}"
        )));
    }
    let r = 1.0 + a - margin;
    Ok(-0.5 * (2.0 * std::f64::consts::PI * a).ln() - r * r / (2.0 * a))
}
