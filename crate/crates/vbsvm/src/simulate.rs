//! Synthetic classification problems and missingness mechanisms used by the
//! evaluation harness and the test suite.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::special::expit;

/// A simulated dataset together with the generating parameters.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: LabeledDataset,
    /// Intercept of the generating linear predictor.
    pub intercept: f64,
    /// Predictor coefficients of the generating linear predictor.
    pub coefficients: DVector<f64>,
}

/// Draw a logistic-regression style problem: standard-normal predictors,
/// standard-normal coefficients, labels in `{-1, +1}` with
/// `P(y = +1) = expit(intercept + x' coef)`.
pub fn simulate_logistic(n: usize, d: usize, rng: &mut RngState) -> Result<SimulatedData> {
    if n == 0 || d == 0 {
        return Err(Error::Dimension(format!(
            "simulation needs n >= 1 and d >= 1, got n={n}, d={d}"
        )));
    }
    let intercept: f64 = rng.sample(StandardNormal);
    let coefficients = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let features = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let labels = DVector::from_fn(n, |i, _| {
        let eta = intercept + features.row(i).transpose().dot(&coefficients);
        if rng.random::<f64>() < expit(eta) {
            1.0
        } else {
            -1.0
        }
    });
    let feature_names = (1..=d).map(|j| format!("x{j}")).collect();
    let data = LabeledDataset::new(features, labels, feature_names, None)?;
    Ok(SimulatedData {
        data,
        intercept,
        coefficients,
    })
}

/// Draw a sparse problem: `m` candidate predictors of which the first
/// `n_signal` carry coefficient `signal` with alternating sign and the rest
/// are pure noise. Returns the data and the indicator of true signals.
pub fn simulate_sparse(
    n: usize,
    m: usize,
    n_signal: usize,
    signal: f64,
    rng: &mut RngState,
) -> Result<(SimulatedData, Vec<bool>)> {
    if n_signal > m {
        return Err(Error::Dimension(format!(
            "n_signal={n_signal} exceeds number of predictors m={m}"
        )));
    }
    let mut sim = simulate_logistic(n, m, rng)?;
    let truth: Vec<bool> = (0..m).map(|j| j < n_signal).collect();
    let coefficients = DVector::from_fn(m, |j, _| {
        if truth[j] {
            if j % 2 == 0 {
                signal
            } else {
                -signal
            }
        } else {
            0.0
        }
    });
    sim.intercept = 0.0;
    let labels = DVector::from_fn(n, |i, _| {
        let eta = sim.data.features.row(i).transpose().dot(&coefficients);
        if rng.random::<f64>() < expit(eta) {
            1.0
        } else {
            -1.0
        }
    });
    sim.data.labels = labels;
    sim.coefficients = coefficients;
    Ok((sim, truth))
}

/// Sparse problem with margin-rule labels: `y = sign(d' v)`, then each
/// label flipped independently with probability `flip_rate`. Unlike the
/// logistic labels of [`simulate_sparse`], the label noise here is a fixed
/// rate independent of the linear predictor, which keeps selection
/// benchmarks interpretable.
pub fn simulate_sparse_margin(
    n: usize,
    m: usize,
    n_signal: usize,
    signal: f64,
    flip_rate: f64,
    rng: &mut RngState,
) -> Result<(SimulatedData, Vec<bool>)> {
    if !(0.0..=0.5).contains(&flip_rate) {
        return Err(Error::Domain(format!(
            "flip rate must lie in [0, 0.5], got {flip_rate}"
        )));
    }
    let (mut sim, truth) = simulate_sparse(n, m, n_signal, signal, rng)?;
    let eta = &sim.data.features * &sim.coefficients;
    sim.data.labels = DVector::from_fn(n, |i, _| {
        let s = if eta[i] >= 0.0 { 1.0 } else { -1.0 };
        if rng.random::<f64>() < flip_rate {
            -s
        } else {
            s
        }
    });
    Ok((sim, truth))
}

/// Blank out each feature cell independently with probability `rate`
/// (missing completely at random). Returns the number of cells removed.
pub fn apply_mcar(data: &mut LabeledDataset, rate: f64, rng: &mut RngState) -> Result<usize> {
    apply_mcar_columns(data, rate, &(0..data.n_features()).collect::<Vec<_>>(), rng)
}

/// As [`apply_mcar`] but restricted to the given columns.
pub fn apply_mcar_columns(
    data: &mut LabeledDataset,
    rate: f64,
    columns: &[usize],
    rng: &mut RngState,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Domain(format!(
            "missingness rate must lie in [0, 1], got {rate}"
        )));
    }
    for &j in columns {
        if j >= data.n_features() {
            return Err(Error::Dimension(format!(
                "column {j} out of range for d={}",
                data.n_features()
            )));
        }
    }
    let mut removed = 0;
    for i in 0..data.n_rows() {
        for &j in columns {
            if rng.random::<f64>() < rate {
                data.features[(i, j)] = f64::NAN;
                removed += 1;
            }
        }
    }
    Ok(removed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_shapes_and_determinism() {
        let mut rng = RngState::from_seed(3);
        let sim = simulate_logistic(50, 4, &mut rng).unwrap();
        assert_eq!(sim.data.n_rows(), 50);
        assert_eq!(sim.data.n_features(), 4);
        assert_eq!(sim.coefficients.len(), 4);
        assert!(sim.data.labels.iter().all(|&y| y == 1.0 || y == -1.0));
        assert!(sim.data.is_complete());

        let mut rng2 = RngState::from_seed(3);
        let sim2 = simulate_logistic(50, 4, &mut rng2).unwrap();
        assert_eq!(sim.data.features, sim2.data.features);
        assert_eq!(sim.data.labels, sim2.data.labels);
    }

    #[test]
    fn labels_track_linear_predictor() {
        // With a huge coefficient the Bayes rule is nearly deterministic, so
        // the simulated labels should almost always match sign(eta).
        let mut rng = RngState::from_seed(9);
        let mut agree = 0;
        let mut total = 0;
        for _ in 0..20 {
            let sim = simulate_logistic(200, 3, &mut rng).unwrap();
            for i in 0..200 {
                let eta = sim.intercept
                    + sim.data.features.row(i).transpose().dot(&sim.coefficients);
                if eta.abs() > 3.0 {
                    total += 1;
                    let bayes = if eta > 0.0 { 1.0 } else { -1.0 };
                    if sim.data.labels[i] == bayes {
                        agree += 1;
                    }
                }
            }
        }
        assert!(total > 100);
        let rate = agree as f64 / total as f64;
        assert!(rate > 0.9, "agreement with Bayes rule only {rate}");
    }

    #[test]
    fn sparse_truth_layout() {
        let mut rng = RngState::from_seed(5);
        let (sim, truth) = simulate_sparse(100, 10, 3, 2.0, &mut rng).unwrap();
        assert_eq!(truth.iter().filter(|&&t| t).count(), 3);
        assert_eq!(sim.coefficients[0], 2.0);
        assert_eq!(sim.coefficients[1], -2.0);
        assert_eq!(sim.coefficients[2], 2.0);
        assert!(sim.coefficients.iter().skip(3).all(|&c| c == 0.0));
        assert!(simulate_sparse(10, 2, 5, 1.0, &mut rng).is_err());
    }

    #[test]
    fn margin_labels_follow_sign_rule_up_to_flips() {
        let mut rng = RngState::from_seed(11);
        let n = 400;
        let (sim, _) = simulate_sparse_margin(n, 6, 2, 1.5, 0.0, &mut rng).unwrap();
        for i in 0..n {
            let eta = sim.data.features.row(i).transpose().dot(&sim.coefficients);
            let expect = if eta >= 0.0 { 1.0 } else { -1.0 };
            assert_eq!(sim.data.labels[i], expect);
        }

        let (noisy, _) = simulate_sparse_margin(n, 6, 2, 1.5, 0.2, &mut rng).unwrap();
        let flips = (0..n)
            .filter(|&i| {
                let eta = noisy.data.features.row(i).transpose().dot(&noisy.coefficients);
                noisy.data.labels[i] != if eta >= 0.0 { 1.0 } else { -1.0 }
            })
            .count();
        // Binomial(400, 0.2): four standard deviations are exactly 32 draws.
        assert!((flips as f64 - 80.0).abs() < 32.0, "flip count {flips}");
        assert!(simulate_sparse_margin(10, 2, 1, 1.0, 0.7, &mut rng).is_err());
    }

    #[test]
    fn mcar_rates_and_bounds() {
        let mut rng = RngState::from_seed(7);
        let mut sim = simulate_logistic(500, 4, &mut rng).unwrap();
        let removed = apply_mcar(&mut sim.data, 0.3, &mut rng).unwrap();
        let frac = removed as f64 / 2000.0;
        assert!((0.25..0.35).contains(&frac), "empirical rate {frac}");
        let nan_count = sim.data.features.iter().filter(|v| v.is_nan()).count();
        assert_eq!(nan_count, removed);

        let mut sim2 = simulate_logistic(100, 3, &mut rng).unwrap();
        apply_mcar_columns(&mut sim2.data, 0.5, &[1], &mut rng).unwrap();
        for i in 0..100 {
            assert!(!sim2.data.features[(i, 0)].is_nan());
            assert!(!sim2.data.features[(i, 2)].is_nan());
        }
        assert!(apply_mcar(&mut sim2.data, 1.5, &mut rng).is_err());
        assert!(apply_mcar_columns(&mut sim2.data, 0.1, &[7], &mut rng).is_err());
    }
}
