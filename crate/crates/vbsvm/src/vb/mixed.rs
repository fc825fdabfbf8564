//! Variational fitter for the linear mixed classifier: fixed effects with a
//! flat-ish normal prior, random effects with an inverse-gamma variance that
//! is learned jointly. Running it on the penalty-form design (intercept
//! fixed, predictors random) makes the ridge penalty self-tuning.

use nalgebra::{DMatrix, DVector};

use crate::data::DesignPair;
use crate::error::{Error, Result};
use crate::linalg::{diag_quadform, symmetrize, SpdChol};
use crate::special::ln_gamma;

use super::{check_labels, chi_to_mean_inv_a, guard_finite, sum_log_k_half, PriorConfig};

/// Converged variational state for the mixed classifier. Coefficients are
/// stacked fixed-then-random: `mu = (mu_beta, mu_u)`.
#[derive(Debug, Clone)]
pub struct VbMixedState {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub chi: DVector<f64>,
    pub mu_a_inv: DVector<f64>,
    /// `E[1/sigma_u^2]` under the fitted inverse-gamma factor.
    pub mu_inv_sigma_u: f64,
    /// Rate parameter of the fitted inverse-gamma factor.
    pub b_q_sigma_u: f64,
    /// Number of fixed-effect columns.
    pub p: usize,
    /// Number of random-effect columns.
    pub m: usize,
    pub lb_trace: Vec<f64>,
    pub converged: bool,
}

impl VbMixedState {
    pub fn final_lower_bound(&self) -> f64 {
        *self.lb_trace.last().expect("fit always records at least one sweep")
    }

    /// Fixed-effect part of the posterior mean.
    pub fn mu_beta(&self) -> DVector<f64> {
        DVector::from_iterator(self.p, self.mu.iter().take(self.p).copied())
    }

    /// Random-effect part of the posterior mean.
    pub fn mu_u(&self) -> DVector<f64> {
        DVector::from_iterator(self.m, self.mu.iter().skip(self.p).copied())
    }
}

/// Optional warm start for [`fit_vb_mixed`].
#[derive(Debug, Clone, Default)]
pub struct VbMixedInit {
    /// Working weights `E[1/a]` (default all ones).
    pub mu_a_inv: Option<DVector<f64>>,
    /// Starting value of `E[1/sigma_u^2]` (default prior mean `a_u / b_u`).
    pub mu_inv_sigma_u: Option<f64>,
}

/// Fit the mixed classifier by coordinate ascent.
pub fn fit_vb_mixed(
    design: &DesignPair,
    y: &DVector<f64>,
    prior: &PriorConfig,
    init: Option<&VbMixedInit>,
) -> Result<VbMixedState> {
    let (n, p, m) = (design.n(), design.p(), design.m());
    if m == 0 {
        return Err(Error::Dimension(
            "mixed fit needs at least one random-effect column".to_string(),
        ));
    }
    check_labels(y, n)?;
    prior.validate()?;
    let c = design.combined();
    let ct = c.transpose();
    let ctrl = prior.solver;

    let mut mu_a_inv = match init.and_then(|i| i.mu_a_inv.clone()) {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Dimension(format!(
                    "init weight vector has length {}, need {n}",
                    w.len()
                )));
            }
            w
        }
        None => DVector::from_element(n, 1.0),
    };
    let mut mu_inv_sigma_u = init
        .and_then(|i| i.mu_inv_sigma_u)
        .unwrap_or(prior.a_u / prior.b_u);
    if !(mu_inv_sigma_u > 0.0) {
        return Err(Error::Domain(
            "init E[1/sigma_u^2] must be positive".to_string(),
        ));
    }

    let mut lb_trace = Vec::new();
    let mut converged = false;
    let mut kept: Option<(DVector<f64>, DMatrix<f64>, DVector<f64>, f64)> = None;

    for sweep in 0..ctrl.max_iter {
        // Coefficient block.
        let mut prec = &ct * DMatrix::from_diagonal(&mu_a_inv) * &c;
        for j in 0..p {
            prec[(j, j)] += 1.0 / prior.sigma2_beta;
        }
        for j in p..p + m {
            prec[(j, j)] += mu_inv_sigma_u;
        }
        let chol = SpdChol::new(&symmetrize(&prec))
            .map_err(|e| Error::numerical_at(format!("coefficient update: {e}"), sweep))?;
        let rhs = &ct * y.component_mul(&mu_a_inv.add_scalar(1.0));
        let mu = chol.solve(&rhs);
        let sigma = chol.inverse();
        let ln_det_sigma = -chol.ln_det();

        // Augmentation block.
        let fitted = &c * &mu;
        let quad = diag_quadform(&c, &sigma);
        let mut chi = DVector::from_fn(n, |i, _| {
            let r = 1.0 - y[i] * fitted[i];
            r * r + quad[i]
        });
        mu_a_inv = chi_to_mean_inv_a(&mut chi);

        // Variance block.
        let u_sq = mu.rows(p, m).norm_squared()
            + sigma.view((p, p), (m, m)).trace();
        let b_q = prior.b_u + 0.5 * u_sq;
        mu_inv_sigma_u = (prior.a_u + m as f64 / 2.0) / b_q;

        let beta_sq = mu.rows(0, p).norm_squared() + sigma.view((0, 0), (p, p)).trace();
        let lb = lower_bound_parts(
            n,
            p,
            m,
            prior,
            ln_det_sigma,
            beta_sq,
            y.dot(&fitted),
            &chi,
            b_q,
        )?;
        let lb = guard_finite(lb, sweep)?;
        let prev = lb_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        lb_trace.push(lb);
        kept = Some((mu, sigma, chi, b_q));
        if ctrl.converged(prev, lb) {
            converged = true;
            break;
        }
    }

    let (mu, sigma, chi, b_q_sigma_u) = kept.expect("max_iter >= 1");
    Ok(VbMixedState {
        mu,
        sigma,
        chi,
        mu_a_inv,
        mu_inv_sigma_u,
        b_q_sigma_u,
        p,
        m,
        lb_trace,
        converged,
    })
}

#[allow(clippy::too_many_arguments)]
fn lower_bound_parts(
    n: usize,
    p: usize,
    m: usize,
    prior: &PriorConfig,
    ln_det_sigma: f64,
    beta_sq: f64,
    fit_term: f64,
    chi: &DVector<f64>,
    b_q: f64,
) -> Result<f64> {
    let (nf, pf, mf) = (n as f64, p as f64, m as f64);
    let a_tilde = prior.a_u + mf / 2.0;
    Ok((pf + mf) / 2.0 - nf + nf * std::f64::consts::LN_2
        - nf / 2.0 * (2.0 * std::f64::consts::PI).ln()
        - pf / 2.0 * prior.sigma2_beta.ln()
        - beta_sq / (2.0 * prior.sigma2_beta)
        + 0.5 * ln_det_sigma
        + fit_term
        + 0.25 * chi.iter().map(|&c| c.ln()).sum::<f64>()
        + sum_log_k_half(chi)?
        + prior.a_u * prior.b_u.ln()
        - ln_gamma(prior.a_u)
        - a_tilde * b_q.ln()
        + ln_gamma(a_tilde))
}

/// Lower bound recomputed from a stored state; matches the final trace
/// entry of the fit that produced it.
pub fn lower_bound_mixed(
    state: &VbMixedState,
    design: &DesignPair,
    y: &DVector<f64>,
    prior: &PriorConfig,
) -> Result<f64> {
    let (n, p, m) = (design.n(), design.p(), design.m());
    check_labels(y, n)?;
    if state.mu.len() != p + m || state.chi.len() != n || state.p != p || state.m != m {
        return Err(Error::Dimension(
            "state does not match design dimensions".to_string(),
        ));
    }
    let c = design.combined();
    let chol = SpdChol::new(&state.sigma)?;
    let fitted = &c * &state.mu;
    let beta_sq =
        state.mu.rows(0, p).norm_squared() + state.sigma.view((0, 0), (p, p)).trace();
    lower_bound_parts(
        n,
        p,
        m,
        prior,
        chol.ln_det(),
        beta_sq,
        y.dot(&fitted),
        &state.chi,
        state.b_q_sigma_u,
    )
}

/// Effective ridge penalty implied by the fitted random-effect variance:
/// `1 / (4 E_q[sigma_u^2])`. Needs `a_u + m/2 > 1` for the posterior mean of
/// `sigma_u^2` to exist.
pub fn implied_penalty(state: &VbMixedState, prior: &PriorConfig) -> Result<f64> {
    let a_tilde = prior.a_u + state.m as f64 / 2.0;
    if a_tilde <= 1.0 {
        return Err(Error::Domain(format!(
            "E[sigma_u^2] undefined: a_u + m/2 = {a_tilde} <= 1"
        )));
    }
    let mean_sigma_u2 = state.b_q_sigma_u / (a_tilde - 1.0);
    Ok(1.0 / (4.0 * mean_sigma_u2))
}

/// Hard labels for new rows of the combined design `[X_new Z_new]`.
pub fn predict_mixed(state: &VbMixedState, c_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    super::basic::predict_linear(&state.mu, c_new)
}
