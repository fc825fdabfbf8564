//! Adaptive numerical integration.
//!
//! The crate's tests lean on quadrature as an independent route to values
//! that the implementation computes in closed form (Bessel integrals,
//! density normalizers, mixture identities), so this module is deliberately
//! free of any model-specific code: plain adaptive Simpson with a
//! change-of-variable helper for the positive half line.

use crate::error::{Error, Result};

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`.
///
/// # Example
/// ```
/// use vbsvm::quad::integrate;
/// let v = integrate(|x| x * x, 0.0, 1.0, 1e-12).unwrap();
/// assert!((v - 1.0 / 3.0).abs() < 1e-10);
/// ```
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Domain(format!(
            "integrate requires finite a < b, got [{a}, {b}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("integrate requires tol > 0, got {tol}")));
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let v = adaptive(&f, a, b, fa, fm, fb, whole, tol, 60);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numerical("non-finite quadrature result"))
    }
}

/// Integrate `f` over `(0, inf)` to absolute tolerance `tol` using the
/// substitution `x = exp(s)`, which handles both an integrable singularity
/// at zero and exponential tails.
///
/// The transformed integrand is assumed negligible outside
/// `s in [-700, 700]`; that covers every density this crate works with.
pub fn integrate_positive_half_line<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<f64> {
    // Expand the window outward until the integrand is dead at both ends;
    // start narrow so well-behaved densities stay cheap.
    let g = |s: f64| {
        let x = s.exp();
        let v = f(x) * x;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut lo = -30.0;
    let mut hi = 30.0;
    while lo > -700.0 && g(lo).abs() > 1e-280 {
        lo -= 20.0;
    }
    while hi < 700.0 && g(hi).abs() > 1e-280 {
        hi += 20.0;
    }
    // Integrate in fixed-width chunks: a single adaptive pass over a wide
    // window can miss a narrow peak entirely (every probe lands in the flat
    // tails and the error estimate is spuriously tiny).
    let n_chunks = ((hi - lo) / 10.0).ceil() as usize;
    let chunk_tol = tol / n_chunks as f64;
    let mut total = 0.0;
    let mut s = lo;
    while s < hi {
        let e = (s + 10.0).min(hi);
        total += integrate(&g, s, e, chunk_tol)?;
        s = e;
    }
    Ok(total)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert_relative_eq!(v, 8.0, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_mass() {
        let v = integrate(
            |x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            -12.0,
            12.0,
            1e-12,
        )
        .unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn half_line_exponential() {
        // int_0^inf exp(-x) dx = 1, with the singularity-free transform.
        let v = integrate_positive_half_line(|x| (-x).exp(), 1e-10).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn half_line_inverse_sqrt_singularity() {
        // int_0^inf x^{-1/2} exp(-x) dx = Gamma(1/2) = sqrt(pi).
        let v = integrate_positive_half_line(|x| x.powf(-0.5) * (-x).exp(), 1e-10).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn rejects_bad_interval() {
        assert!(integrate(|x| x, 1.0, 0.0, 1e-8).is_err());
        assert!(integrate(|x| x, 0.0, f64::INFINITY, 1e-8).is_err());
        assert!(integrate(|x| x, 0.0, 1.0, 0.0).is_err());
    }
}
