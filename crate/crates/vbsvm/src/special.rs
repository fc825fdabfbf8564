//! Scalar special functions used throughout the variational updates and
//! marginal-likelihood bounds.
//!
//! Everything here works on the log scale where overflow is a risk. The
//! half-integer Bessel functions have closed forms, so no series or
//! continued-fraction evaluation is needed:
//!
//! ```text
//! K_{1/2}(x) = sqrt(pi / (2 x)) exp(-x)
//! K_{3/2}(x) = K_{1/2}(x) (1 + 1/x)
//! ```

use crate::error::{Error, Result};

pub use statrs::function::gamma::ln_gamma;

/// log K_{1/2}(x), the modified Bessel function of the second kind of order
/// one half, evaluated on the log scale.
///
/// Valid for `x > 0`; stays finite for arguments far beyond the point where
/// `K_{1/2}(x)` itself underflows (e.g. `x = 700`).
///
/// # Example
/// ```
/// use vbsvm::special::log_bessel_k_half;
/// // K_{1/2}(pi/2) = exp(-pi/2), so the log is -pi/2.
/// let v = log_bessel_k_half(std::f64::consts::FRAC_PI_2).unwrap();
/// assert!((v + std::f64::consts::FRAC_PI_2).abs() < 1e-15);
/// ```
pub fn log_bessel_k_half(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!(
            "log_bessel_k_half requires x > 0, got {x}"
        )));
    }
    Ok(0.5 * (std::f64::consts::PI / 2.0).ln() - 0.5 * x.ln() - x)
}

/// log K_{3/2}(x); satisfies `K_{3/2}(x) / K_{1/2}(x) = 1 + 1/x`.
pub fn log_bessel_k_three_halves(x: f64) -> Result<f64> {
    Ok(log_bessel_k_half(x)? + (1.0 + 1.0 / x).ln())
}

/// Logistic function `1 / (1 + exp(-x))`, stable over the whole double range.
///
/// Large negative arguments may underflow to subnormals or zero, never to
/// NaN; large positive arguments saturate at 1.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds `ln(p / (1 - p))`, the inverse of [`expit`] on `(0, 1)`.
pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "logit requires p in (0, 1), got {p}"
        )));
    }
    // ln(p) - ln(1 - p) via ln_1p keeps precision for p near 1.
    Ok(p.ln() - (-p).ln_1p())
}

/// Log of the multivariate gamma function,
/// `ln Gamma_d(x) = d(d-1)/4 ln(pi) + sum_{j=1..d} ln Gamma(x + (1 - j)/2)`.
///
/// Requires `d >= 1` and `x > (d - 1)/2` so that every gamma argument is
/// positive.
pub fn log_multivariate_gamma(d: usize, x: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain(
            "log_multivariate_gamma requires d >= 1".to_string(),
        ));
    }
    if !(x > (d as f64 - 1.0) / 2.0) {
        return Err(Error::Domain(format!(
            "log_multivariate_gamma requires x > (d-1)/2 = {}, got {x}",
            (d as f64 - 1.0) / 2.0
        )));
    }
    let mut s = d as f64 * (d as f64 - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for j in 1..=d {
        s += ln_gamma(x + (1.0 - j as f64) / 2.0);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn log_bessel_k_half_reference_values() {
        // Frozen against 30-digit arbitrary-precision evaluation.
        assert_relative_eq!(
            log_bessel_k_half(0.5).unwrap(),
            0.072364942924700087,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            log_bessel_k_half(1.0).unwrap(),
            -0.77420864735527257,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            log_bessel_k_half(4.0).unwrap(),
            -4.4673558279152179,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            log_bessel_k_half(10.0).unwrap(),
            -10.925501193852295,
            max_relative = 1e-14
        );
    }

    #[test]
    fn log_bessel_k_half_matches_integral_representation() {
        // K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt; quadrature is an
        // independent route to the same value as the closed form.
        for &x in &[0.5_f64, 1.0, 4.0] {
            let integral = quad::integrate(
                |t: f64| (-x * t.cosh()).exp() * (0.5 * t).cosh(),
                0.0,
                // Beyond this point the integrand is below 1e-40.
                ((2.0 * 100.0 / x).max(4.0)).ln().max(4.0) * 2.0,
                1e-12,
            )
            .unwrap();
            assert_relative_eq!(
                log_bessel_k_half(x).unwrap(),
                integral.ln(),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn log_bessel_k_half_no_overflow_far_out() {
        let v = log_bessel_k_half(700.0).unwrap();
        assert!(v.is_finite());
        assert_relative_eq!(v, 0.5 * (std::f64::consts::PI / 1400.0).ln() - 700.0);
    }

    #[test]
    fn log_bessel_k_half_strictly_decreasing() {
        let xs: Vec<f64> = (1..200).map(|i| i as f64 * 0.07).collect();
        for w in xs.windows(2) {
            assert!(
                log_bessel_k_half(w[1]).unwrap() < log_bessel_k_half(w[0]).unwrap(),
                "log K_1/2 must be strictly decreasing"
            );
        }
    }

    #[test]
    fn log_bessel_k_half_rejects_nonpositive() {
        assert!(log_bessel_k_half(0.0).is_err());
        assert!(log_bessel_k_half(-1.0).is_err());
        assert!(log_bessel_k_half(f64::NAN).is_err());
    }

    #[test]
    fn bessel_ratio_recurrence() {
        // K_{3/2}(x) / K_{1/2}(x) = 1 + 1/x.
        for &x in &[0.1, 1.0, 10.0] {
            let ratio = (log_bessel_k_three_halves(x).unwrap()
                - log_bessel_k_half(x).unwrap())
            .exp();
            assert_relative_eq!(ratio, 1.0 + 1.0 / x, max_relative = 1e-10);
        }
    }

    #[test]
    fn expit_basics() {
        assert_eq!(expit(0.0), 0.5);
        let tiny = expit(-710.0);
        assert!(tiny >= 0.0 && tiny <= 1e-300 && !tiny.is_nan());
        // e^{-710} underflows to zero, so saturation at exactly 1.0 is the
        // best f64 can represent.
        assert_eq!(expit(710.0), 1.0);
        // Monotone on a coarse grid.
        let mut prev = expit(-40.0);
        for i in -39..=40 {
            let v = expit(i as f64);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn logit_domain() {
        assert!(logit(0.0).is_err());
        assert!(logit(1.0).is_err());
        assert!(logit(-0.5).is_err());
        assert!(logit(1.5).is_err());
        assert_eq!(logit(0.5).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn expit_logit_round_trip(p in 1e-8f64..=0.99999999f64) {
            let back = expit(logit(p).unwrap());
            prop_assert!((back - p).abs() < 1e-12);
        }
    }

    #[test]
    fn log_multivariate_gamma_reference_values() {
        // d = 1 reduces to the scalar log-gamma.
        assert_relative_eq!(
            log_multivariate_gamma(1, 3.0).unwrap(),
            2.0f64.ln(),
            max_relative = 1e-14
        );
        // Frozen against 30-digit arbitrary-precision evaluation.
        assert_relative_eq!(
            log_multivariate_gamma(2, 2.0).unwrap(),
            0.45158270528945486,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            log_multivariate_gamma(3, 3.0).unwrap(),
            2.6949248798069647,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            log_multivariate_gamma(2, 5.5).unwrap(),
            7.7082327408913620,
            max_relative = 1e-13
        );
    }

    #[test]
    fn log_multivariate_gamma_domain() {
        assert!(log_multivariate_gamma(0, 1.0).is_err());
        assert!(log_multivariate_gamma(3, 1.0).is_err()); // needs x > 1
        assert!(log_multivariate_gamma(1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn log_multivariate_gamma_d1_is_ln_gamma(x in 0.1f64..30.0f64) {
            let a = log_multivariate_gamma(1, x).unwrap();
            let b = ln_gamma(x);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
