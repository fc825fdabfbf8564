//! Balanced error rate and the repeated hold-out evaluation harness.
//!
//! The harness draws independent train/test splits, refits the chosen model
//! on each training side (standardization included, so nothing leaks from
//! the test side), and scores hard labels on the test side with the
//! balanced error rate. Replicates run concurrently but are seeded per
//! replicate index, so reports are identical regardless of thread count.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{
    build_penalty_design, split_holdout, LabeledDataset, SplitOptions, StandardizeTransform,
};
use crate::error::{Error, Result};
use crate::linalg::SpdChol;
use crate::mcmc::sparse::effective_coefficient_means;
use crate::mcmc::{
    chain_imputation_summary, gibbs_basic, gibbs_missing, gibbs_mixed, gibbs_sparse, GibbsConfig,
};
use crate::rng::RngState;
use crate::vb::{
    check_labels, conditional_fill_rows, fit_vb_basic, fit_vb_missing, fit_vb_mixed,
    fit_vb_sparse, predict_linear, predict_mixed, predict_missing, predict_sparse, PriorConfig,
};

/// Model variant selector shared by the harness, model persistence, and the
/// command-line frontend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Fixed-penalty classifier: all coefficients share the penalty `alpha`.
    Basic,
    /// Learned-penalty classifier: unpenalized intercept, common learned
    /// variance on the remaining coefficients.
    Mixed,
    /// Spike-and-slab classifier with per-coefficient inclusion indicators.
    Sparse,
    /// Learned-penalty classifier with a Gaussian feature model that fills
    /// missing predictor entries during the fit.
    Missing,
}

/// Inference engine selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Deterministic coordinate-ascent variational fit.
    Vb,
    /// Gibbs sampling; predictions use posterior means.
    Gibbs,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Variant::Basic => "basic",
            Variant::Mixed => "mixed",
            Variant::Sparse => "sparse",
            Variant::Missing => "missing",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Variant::Basic),
            "mixed" => Ok(Variant::Mixed),
            "sparse" => Ok(Variant::Sparse),
            "missing" => Ok(Variant::Missing),
            other => Err(Error::Domain(format!(
                "unknown variant '{other}' (expected basic, mixed, sparse, or missing)"
            ))),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Vb => "vb",
            Engine::Gibbs => "gibbs",
        })
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vb" => Ok(Engine::Vb),
            "gibbs" => Ok(Engine::Gibbs),
            other => Err(Error::Domain(format!(
                "unknown engine '{other}' (expected vb or gibbs)"
            ))),
        }
    }
}

/// A named fitting recipe: model variant plus inference engine, together
/// with the prior and any engine-specific settings.
///
/// The mixed, sparse, and missing variants use the penalty-form design
/// (global unpenalized intercept, every predictor penalized or selectable);
/// the basic variant prepends an intercept column that shares the fixed
/// penalty. Group columns are not used by this harness.
#[derive(Debug, Clone)]
pub struct FitterSpec {
    pub variant: Variant,
    pub engine: Engine,
    pub prior: PriorConfig,
    /// Fixed penalty of the basic variant; ignored by the others.
    pub alpha: f64,
    /// Chain sizes for the Gibbs engine; the seed and stream fields are
    /// overridden per replicate. Ignored by the variational engine.
    pub gibbs: GibbsConfig,
    /// Drop incomplete training rows before fitting (complete-case
    /// analysis). Required for variants other than `missing` when the data
    /// has gaps; without it their errors propagate.
    pub complete_cases: bool,
}

impl FitterSpec {
    pub fn new(variant: Variant, engine: Engine) -> Self {
        FitterSpec {
            variant,
            engine,
            prior: PriorConfig::default(),
            alpha: 1.0,
            gibbs: GibbsConfig::default(),
            complete_cases: false,
        }
    }

    /// Variational recipe with default priors.
    pub fn vb(variant: Variant) -> Self {
        Self::new(variant, Engine::Vb)
    }

    /// Gibbs recipe with default priors and chain sizes.
    pub fn gibbs(variant: Variant) -> Self {
        Self::new(variant, Engine::Gibbs)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.variant == Variant::Basic && !(self.alpha > 0.0) {
            return Err(Error::Domain(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.engine == Engine::Gibbs {
            self.gibbs.validate()?;
        }
        Ok(())
    }
}

/// Protocol settings for [`repeated_holdout`].
#[derive(Debug, Clone, Copy)]
pub struct HoldoutOptions {
    /// Number of independent splits.
    pub reps: usize,
    /// Fraction of rows on the training side of each split.
    pub train_fraction: f64,
    /// Base seed; replicate `r` uses stream `r` of this seed.
    pub seed: u64,
    /// Refit column standardization on each training side.
    pub standardize: bool,
}

impl HoldoutOptions {
    /// Full protocol: 100 splits at a 3/4 train fraction.
    pub fn paper() -> Self {
        HoldoutOptions { reps: 100, train_fraction: 0.75, seed: 0, standardize: true }
    }

    /// Reduced protocol for quick continuous-integration runs.
    pub fn ci() -> Self {
        HoldoutOptions { reps: 20, ..Self::paper() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Domain("reps must be at least 1".to_string()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Domain(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

impl Default for HoldoutOptions {
    fn default() -> Self {
        Self::paper()
    }
}

/// One replicate's outcome.
#[derive(Debug, Clone, Copy)]
pub struct RepResult {
    pub replicate: usize,
    pub ber: f64,
    /// Wall-clock seconds for standardization, fit, and prediction.
    pub seconds: f64,
    /// `false` when a variational fit stopped at its sweep cap.
    pub converged: bool,
}

/// Boxplot-style summary of the replicate error rates.
#[derive(Debug, Clone, Copy)]
pub struct BerSummary {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Outcome of a repeated hold-out run, ordered by replicate index.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub replicates: Vec<RepResult>,
    pub mean_ber: f64,
}

impl EvalReport {
    pub fn new(replicates: Vec<RepResult>) -> Result<Self> {
        if replicates.is_empty() {
            return Err(Error::Data("report needs at least one replicate".to_string()));
        }
        let mean_ber =
            replicates.iter().map(|r| r.ber).sum::<f64>() / replicates.len() as f64;
        Ok(EvalReport { replicates, mean_ber })
    }

    pub fn n_replicates(&self) -> usize {
        self.replicates.len()
    }

    /// Per-replicate error rates, in replicate order.
    pub fn bers(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.ber).collect()
    }

    /// Minimum, quartiles, and maximum of the replicate error rates.
    pub fn summary(&self) -> BerSummary {
        let mut sorted = self.bers();
        sorted.sort_by(|a, b| a.total_cmp(b));
        BerSummary {
            min: sorted[0],
            q25: crate::mcmc::quantile(&sorted, 0.25),
            median: crate::mcmc::quantile(&sorted, 0.5),
            q75: crate::mcmc::quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        }
    }

    /// Columnar text report: one row per replicate plus a `#`-prefixed
    /// summary block. `with_timing` controls the seconds column, which is
    /// the one non-reproducible field.
    pub fn render(&self, with_timing: bool) -> String {
        let mut out = String::new();
        out.push_str(if with_timing { "replicate\tber\tseconds\n" } else { "replicate\tber\n" });
        for r in &self.replicates {
            if with_timing {
                out.push_str(&format!("{}\t{:.6}\t{:.4}\n", r.replicate, r.ber, r.seconds));
            } else {
                out.push_str(&format!("{}\t{:.6}\n", r.replicate, r.ber));
            }
        }
        let s = self.summary();
        out.push_str(&format!(
            "# summary reps={} mean={:.6} min={:.6} q25={:.6} median={:.6} q75={:.6} max={:.6}\n",
            self.n_replicates(),
            self.mean_ber,
            s.min,
            s.q25,
            s.median,
            s.q75,
            s.max
        ));
        out
    }
}

/// Balanced error rate: the mean of the two class-conditional
/// misclassification rates. Both classes must appear in `y_true`.
pub fn ber(y_true: &DVector<f64>, y_pred: &DVector<f64>) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension(format!(
            "{} reference labels against {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    check_labels(y_true, y_true.len())?;
    check_labels(y_pred, y_pred.len())?;
    let (mut n_pos, mut n_neg, mut e_pos, mut e_neg) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..y_true.len() {
        if y_true[i] > 0.0 {
            n_pos += 1.0;
            if y_pred[i] != y_true[i] {
                e_pos += 1.0;
            }
        } else {
            n_neg += 1.0;
            if y_pred[i] != y_true[i] {
                e_neg += 1.0;
            }
        }
    }
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(Error::Data(
            "balanced error rate needs both classes present in the reference labels".to_string(),
        ));
    }
    Ok(0.5 * (e_pos / n_pos + e_neg / n_neg))
}

/// Stream offset separating the engine's random draws from the split draws,
/// so adding replicates never perturbs existing ones.
const ENGINE_STREAM_OFFSET: u64 = 1 << 32;

/// The train/test row indices of replicate `rep`. When the data has missing
/// cells the test side is restricted to fully observed rows, so every
/// variant can be scored on the same test sets.
pub fn holdout_indices(
    data: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
    rep: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = RngState::from_seed_stream(seed, rep as u64);
    let opts = SplitOptions { full_test_rows: !data.is_complete() };
    split_holdout(data, train_fraction, &mut rng, opts)
}

/// The repeated hold-out protocol: `reps` independent splits, a fresh fit
/// per training side, balanced error rate per test side.
///
/// Replicates run concurrently; results are ordered by replicate index and
/// every replicate derives its randomness from `(seed, replicate)` alone,
/// so the report does not depend on thread scheduling. Fitter errors abort
/// the run, tagged with the lowest failing replicate index.
pub fn repeated_holdout(
    data: &LabeledDataset,
    fitter: &FitterSpec,
    opts: &HoldoutOptions,
) -> Result<EvalReport> {
    opts.validate()?;
    fitter.validate()?;
    let per_rep: Vec<Result<RepResult>> = (0..opts.reps)
        .into_par_iter()
        .map(|rep| {
            run_replicate(data, fitter, opts, rep)
                .map_err(|e| e.with_context(&format!("replicate {rep}")))
        })
        .collect();
    let replicates = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    EvalReport::new(replicates)
}

fn run_replicate(
    data: &LabeledDataset,
    fitter: &FitterSpec,
    opts: &HoldoutOptions,
    rep: usize,
) -> Result<RepResult> {
    let (mut train_idx, test_idx) = holdout_indices(data, opts.train_fraction, opts.seed, rep)?;
    if fitter.complete_cases {
        train_idx.retain(|&i| data.row_complete(i));
        if train_idx.len() < 2 {
            return Err(Error::Data(format!(
                "complete-case training side has {} rows",
                train_idx.len()
            )));
        }
    }
    let train = data.select_rows(&train_idx)?;
    let test = data.select_rows(&test_idx)?;

    let started = Instant::now();
    let (train_feats, test_feats) = if opts.standardize {
        let tr = StandardizeTransform::fit(&train.features)?;
        (tr.apply(&train.features)?, tr.apply(&test.features)?)
    } else {
        (train.features.clone(), test.features.clone())
    };
    let train_std = LabeledDataset::new(
        train_feats,
        train.labels.clone(),
        train.feature_names.clone(),
        train.groups.clone(),
    )?;
    let engine_rng = (opts.seed, rep as u64 + ENGINE_STREAM_OFFSET);
    let (pred, converged) = fit_predict_once(fitter, &train_std, &test_feats, engine_rng)?;
    let seconds = started.elapsed().as_secs_f64();

    Ok(RepResult { replicate: rep, ber: ber(&test.labels, &pred)?, seconds, converged })
}

/// Intercept column prepended to a feature matrix.
fn with_intercept(features: &DMatrix<f64>) -> DMatrix<f64> {
    features.clone().insert_column(0, 1.0)
}

/// Fit on (already standardized) training data and predict hard labels for
/// the test features. Returns the predictions and a convergence flag (always
/// `true` for the Gibbs engine, which has no sweep cap).
fn fit_predict_once(
    fitter: &FitterSpec,
    train: &LabeledDataset,
    test_features: &DMatrix<f64>,
    engine_rng: (u64, u64),
) -> Result<(DVector<f64>, bool)> {
    let prior = &fitter.prior;
    let chain_config =
        GibbsConfig { seed: engine_rng.0, stream: engine_rng.1, ..fitter.gibbs };
    match (fitter.variant, fitter.engine) {
        (Variant::Basic, Engine::Vb) => {
            let x = with_intercept(&train.features);
            let fit = fit_vb_basic(&x, &train.labels, fitter.alpha, &prior.solver, None)?;
            let pred = predict_linear(&fit.mu, &with_intercept(test_features))?;
            Ok((pred, fit.converged))
        }
        (Variant::Basic, Engine::Gibbs) => {
            let x = with_intercept(&train.features);
            let chain = gibbs_basic(&x, &train.labels, fitter.alpha, &chain_config)?;
            let pred = predict_linear(&chain.means(), &with_intercept(test_features))?;
            Ok((pred, true))
        }
        (Variant::Mixed, Engine::Vb) => {
            let design = build_penalty_design(&train.features)?;
            let fit = fit_vb_mixed(&design, &train.labels, prior, None)?;
            let pred = predict_mixed(&fit, &with_intercept(test_features))?;
            Ok((pred, fit.converged))
        }
        (Variant::Mixed, Engine::Gibbs) => {
            let design = build_penalty_design(&train.features)?;
            let chain = gibbs_mixed(&design, &train.labels, prior, &chain_config)?;
            let q = design.p() + design.m();
            let theta = DVector::from_iterator(q, chain.means().iter().copied().take(q));
            let pred = predict_linear(&theta, &with_intercept(test_features))?;
            Ok((pred, true))
        }
        (Variant::Sparse, Engine::Vb) => {
            let design = build_penalty_design(&train.features)?;
            let fit = fit_vb_sparse(&design, &train.labels, prior, None)?;
            let pred = predict_sparse(&fit, &with_intercept(test_features))?;
            Ok((pred, fit.converged))
        }
        (Variant::Sparse, Engine::Gibbs) => {
            let design = build_penalty_design(&train.features)?;
            let chain = gibbs_sparse(&design, &train.labels, prior, &chain_config)?;
            let theta = effective_coefficient_means(&chain);
            let pred = predict_linear(&theta, &with_intercept(test_features))?;
            Ok((pred, true))
        }
        (Variant::Missing, Engine::Vb) => {
            let fit = fit_vb_missing(train, prior, None)?;
            let pred = predict_missing(&fit, test_features)?;
            Ok((pred, fit.converged))
        }
        (Variant::Missing, Engine::Gibbs) => {
            let chain = gibbs_missing(train, prior, &chain_config)?;
            let (theta, mu, sigma) = chain_imputation_summary(&chain)?;
            let precision = SpdChol::new(&sigma)?.inverse();
            let filled = conditional_fill_rows(test_features, &mu, &precision)?;
            let pred = predict_linear(&theta, &with_intercept(&filled))?;
            Ok((pred, true))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{apply_mcar, simulate_logistic};
    use rand::seq::SliceRandom;

    fn labels(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn ber_fixture_values() {
        let truth = labels(&[1.0, 1.0, -1.0, -1.0]);
        assert_eq!(ber(&truth, &truth).unwrap(), 0.0);
        let flipped = labels(&[-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(ber(&truth, &flipped).unwrap(), 1.0);
        // Positive class fully correct, negative class half wrong.
        let half = labels(&[1.0, 1.0, -1.0, 1.0]);
        assert_eq!(ber(&truth, &half).unwrap(), 0.25);
        // Unbalanced classes weigh the per-class rates equally.
        let truth6 = labels(&[1.0, 1.0, 1.0, 1.0, -1.0, -1.0]);
        let pred6 = labels(&[1.0, 1.0, -1.0, -1.0, -1.0, 1.0]);
        assert_eq!(ber(&truth6, &pred6).unwrap(), 0.5 * (0.5 + 0.5));
    }

    #[test]
    fn ber_rejects_bad_inputs() {
        let one_class = labels(&[1.0, 1.0]);
        let pred = labels(&[1.0, -1.0]);
        assert!(ber(&one_class, &pred).is_err());
        assert!(ber(&labels(&[1.0, -1.0]), &labels(&[1.0])).is_err());
        assert!(ber(&labels(&[1.0, -1.0]), &labels(&[1.0, 0.5])).is_err());
    }

    #[test]
    fn named_profiles_and_validation() {
        assert_eq!(HoldoutOptions::paper().reps, 100);
        assert_eq!(HoldoutOptions::ci().reps, 20);
        assert_eq!(HoldoutOptions::default().reps, 100);
        let bad = HoldoutOptions { reps: 0, ..HoldoutOptions::ci() };
        assert!(bad.validate().is_err());
        let bad = HoldoutOptions { train_fraction: 1.0, ..HoldoutOptions::ci() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn variant_and_engine_names_round_trip() {
        for v in [Variant::Basic, Variant::Mixed, Variant::Sparse, Variant::Missing] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        for e in [Engine::Vb, Engine::Gibbs] {
            assert_eq!(e.to_string().parse::<Engine>().unwrap(), e);
        }
        assert!("spicy".parse::<Variant>().is_err());
        assert!("mcmc".parse::<Engine>().is_err());
    }

    #[test]
    fn holdout_indices_partition_and_respect_missing_cells() {
        let mut rng = RngState::from_seed(3);
        let mut sim = simulate_logistic(40, 2, &mut rng).unwrap();
        apply_mcar(&mut sim.data, 0.2, &mut rng).unwrap();
        let (train, test) = holdout_indices(&sim.data, 0.75, 7, 0).unwrap();
        assert_eq!(train.len() + test.len(), 40);
        assert_eq!(train.len(), 30);
        let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
        // Incomplete rows never land on the test side.
        assert!(test.iter().all(|&i| sim.data.row_complete(i)));
        // Same replicate, same split; later replicate, different stream.
        let again = holdout_indices(&sim.data, 0.75, 7, 0).unwrap();
        assert_eq!(again.0, train);
        let other = holdout_indices(&sim.data, 0.75, 7, 1).unwrap();
        assert_ne!(other.0, train);
    }

    #[test]
    fn single_rep_equals_manual_composition() {
        let mut rng = RngState::from_seed(21);
        let sim = simulate_logistic(60, 2, &mut rng).unwrap();
        let fitter = FitterSpec::vb(Variant::Mixed);
        let opts = HoldoutOptions { reps: 1, seed: 11, ..HoldoutOptions::ci() };
        let report = repeated_holdout(&sim.data, &fitter, &opts).unwrap();
        assert_eq!(report.n_replicates(), 1);

        let (train_idx, test_idx) = holdout_indices(&sim.data, 0.75, 11, 0).unwrap();
        let train = sim.data.select_rows(&train_idx).unwrap();
        let test = sim.data.select_rows(&test_idx).unwrap();
        let tr = StandardizeTransform::fit(&train.features).unwrap();
        let design = build_penalty_design(&tr.apply(&train.features).unwrap()).unwrap();
        let fit = fit_vb_mixed(&design, &train.labels, &fitter.prior, None).unwrap();
        let c_test = with_intercept(&tr.apply(&test.features).unwrap());
        let pred = predict_mixed(&fit, &c_test).unwrap();
        let expect = ber(&test.labels, &pred).unwrap();
        assert_eq!(report.replicates[0].ber, expect);
        assert_eq!(report.mean_ber, expect);
        assert!(report.replicates[0].converged);
        assert!(report.replicates[0].seconds >= 0.0);
    }

    #[test]
    fn mean_matches_recomputation_and_order_is_by_replicate() {
        let mut rng = RngState::from_seed(8);
        let sim = simulate_logistic(50, 2, &mut rng).unwrap();
        let fitter = FitterSpec::vb(Variant::Mixed);
        let opts = HoldoutOptions { reps: 6, seed: 2, ..HoldoutOptions::ci() };
        let report = repeated_holdout(&sim.data, &fitter, &opts).unwrap();
        assert_eq!(report.n_replicates(), 6);
        let idx: Vec<usize> = report.replicates.iter().map(|r| r.replicate).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4, 5]);
        let mean = report.bers().iter().sum::<f64>() / 6.0;
        assert!((report.mean_ber - mean).abs() < 1e-12);
        for r in &report.replicates {
            assert!((0.0..=1.0).contains(&r.ber));
        }

        // Same seed, bitwise identical error rates.
        let rerun = repeated_holdout(&sim.data, &fitter, &opts).unwrap();
        assert_eq!(report.bers(), rerun.bers());
    }

    #[test]
    fn flipped_duplicates_pin_ber_to_half() {
        // Every feature row appears once with each label, so no linear rule
        // can do better (or worse) than one error per pair.
        let mut rng = RngState::from_seed(14);
        let base = simulate_logistic(50, 2, &mut rng).unwrap();
        let n = 100;
        let features = DMatrix::from_fn(n, 2, |i, j| base.data.features[(i / 2, j)]);
        let labels = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let data = LabeledDataset::new(
            features,
            labels,
            base.data.feature_names.clone(),
            None,
        )
        .unwrap();
        let fitter = FitterSpec::vb(Variant::Mixed);
        let opts = HoldoutOptions { reps: 12, seed: 5, ..HoldoutOptions::ci() };
        let report = repeated_holdout(&data, &fitter, &opts).unwrap();
        assert!(
            (report.mean_ber - 0.5).abs() < 0.12,
            "symmetric data should sit near 0.5, got {}",
            report.mean_ber
        );
    }

    #[test]
    fn label_shuffle_destroys_skill() {
        let mut rng = RngState::from_seed(19);
        let mut sim = simulate_logistic(150, 3, &mut rng).unwrap();
        let mut perm: Vec<f64> = sim.data.labels.iter().copied().collect();
        perm.shuffle(&mut rng);
        sim.data.labels = DVector::from_vec(perm);
        let fitter = FitterSpec::vb(Variant::Mixed);
        let opts = HoldoutOptions { reps: 20, seed: 1, ..HoldoutOptions::ci() };
        let report = repeated_holdout(&sim.data, &fitter, &opts).unwrap();
        assert!(
            report.mean_ber >= 0.45,
            "shuffled labels should leave no skill, got {}",
            report.mean_ber
        );
    }

    #[test]
    fn complete_case_path_matches_manual_subset() {
        let mut rng = RngState::from_seed(33);
        let mut sim = simulate_logistic(80, 2, &mut rng).unwrap();
        apply_mcar(&mut sim.data, 0.15, &mut rng).unwrap();
        let fitter =
            FitterSpec { complete_cases: true, ..FitterSpec::vb(Variant::Mixed) };
        let opts = HoldoutOptions { reps: 1, seed: 4, ..HoldoutOptions::ci() };
        let report = repeated_holdout(&sim.data, &fitter, &opts).unwrap();

        let (train_idx, test_idx) = holdout_indices(&sim.data, 0.75, 4, 0).unwrap();
        let kept: Vec<usize> =
            train_idx.into_iter().filter(|&i| sim.data.row_complete(i)).collect();
        let train = sim.data.select_rows(&kept).unwrap();
        let test = sim.data.select_rows(&test_idx).unwrap();
        let tr = StandardizeTransform::fit(&train.features).unwrap();
        let design = build_penalty_design(&tr.apply(&train.features).unwrap()).unwrap();
        let fit = fit_vb_mixed(&design, &train.labels, &fitter.prior, None).unwrap();
        let pred =
            predict_mixed(&fit, &with_intercept(&tr.apply(&test.features).unwrap())).unwrap();
        assert_eq!(report.replicates[0].ber, ber(&test.labels, &pred).unwrap());
    }

    #[test]
    fn errors_carry_replicate_context() {
        let mut rng = RngState::from_seed(6);
        let mut sim = simulate_logistic(40, 2, &mut rng).unwrap();
        apply_mcar(&mut sim.data, 0.2, &mut rng).unwrap();
        // A gap-blind fitter on gappy training rows must fail, and the
        // failure must say which replicate.
        let fitter = FitterSpec::vb(Variant::Mixed);
        let opts = HoldoutOptions { reps: 2, seed: 9, ..HoldoutOptions::ci() };
        let err = repeated_holdout(&sim.data, &fitter, &opts).unwrap_err();
        assert!(
            err.to_string().contains("replicate"),
            "error should carry the replicate index: {err}"
        );

        let bad = FitterSpec { alpha: -1.0, ..FitterSpec::vb(Variant::Basic) };
        assert!(repeated_holdout(&sim.data, &bad, &opts).is_err());
    }

    #[test]
    fn all_variants_and_engines_run() {
        let mut rng = RngState::from_seed(27);
        let mut sim = simulate_logistic(64, 3, &mut rng).unwrap();
        apply_mcar(&mut sim.data, 0.1, &mut rng).unwrap();
        let small_chain = GibbsConfig { n_burn: 60, n_keep: 60, ..GibbsConfig::default() };
        let opts = HoldoutOptions { reps: 2, seed: 13, ..HoldoutOptions::ci() };
        for variant in [Variant::Basic, Variant::Mixed, Variant::Sparse, Variant::Missing] {
            for engine in [Engine::Vb, Engine::Gibbs] {
                let fitter = FitterSpec {
                    gibbs: small_chain,
                    complete_cases: variant != Variant::Missing,
                    ..FitterSpec::new(variant, engine)
                };
                let report = repeated_holdout(&sim.data, &fitter, &opts).unwrap();
                assert_eq!(report.n_replicates(), 2, "{variant}/{engine}");
                assert!(
                    report.bers().iter().all(|b| (0.0..=1.0).contains(b)),
                    "{variant}/{engine}"
                );
                let rerun = repeated_holdout(&sim.data, &fitter, &opts).unwrap();
                assert_eq!(report.bers(), rerun.bers(), "{variant}/{engine}");
            }
        }
    }

    #[test]
    fn report_rendering() {
        let reps = vec![
            RepResult { replicate: 0, ber: 0.0, seconds: 0.01, converged: true },
            RepResult { replicate: 1, ber: 0.25, seconds: 0.02, converged: true },
            RepResult { replicate: 2, ber: 0.5, seconds: 0.03, converged: true },
            RepResult { replicate: 3, ber: 0.75, seconds: 0.04, converged: true },
            RepResult { replicate: 4, ber: 1.0, seconds: 0.05, converged: true },
        ];
        let report = EvalReport::new(reps).unwrap();
        assert_eq!(report.mean_ber, 0.5);
        let s = report.summary();
        assert_eq!(s.min, 0.0);
        assert_eq!(s.q25, 0.25);
        assert_eq!(s.median, 0.5);
        assert_eq!(s.q75, 0.75);
        assert_eq!(s.max, 1.0);

        let with_t = report.render(true);
        assert!(with_t.starts_with("replicate\tber\tseconds\n"));
        assert!(with_t.contains("1\t0.250000\t0.0200"));
        let without = report.render(false);
        assert!(without.starts_with("replicate\tber\n"));
        assert!(!without.contains("seconds"));
        assert!(without.contains("# summary reps=5 mean=0.500000 min=0.000000"));
        assert_eq!(without.lines().count(), 1 + 5 + 1);

        assert!(EvalReport::new(Vec::new()).is_err());
    }
}
