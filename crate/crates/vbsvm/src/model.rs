//! Model persistence: a self-describing JSON file carrying everything the
//! variant's prediction rule needs, plus the prior and fit diagnostics.
//!
//! Floating-point fields are written with the shortest decimal encoding
//! that parses back to the identical bit pattern (up to 17 significant
//! digits), so a saved model reloads exactly and a reloaded model predicts
//! bit-identically.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::{
    build_penalty_design, build_random_intercept_design, LabeledDataset, StandardizeTransform,
};
use crate::error::{Error, Result};
use crate::evaluate::{Engine, FitterSpec, Variant};
use crate::linalg::SpdChol;
use crate::mcmc::sparse::{effective_coefficient_means, inclusion_probabilities};
use crate::mcmc::{
    chain_imputation_summary, gibbs_basic, gibbs_missing, gibbs_mixed, gibbs_sparse,
    posterior_summary, GibbsChain, ParamSummary,
};
use crate::vb::{
    conditional_fill_rows, decision_values, fit_vb_basic, fit_vb_missing, fit_vb_mixed,
    fit_vb_sparse, PriorConfig, SolverControls,
};

/// Version written into (and required from) every model file.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Prior settings as stored on disk: a flat mirror of [`PriorConfig`] with
/// the inverse-Wishart scale as a row-major nested array.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorRecord {
    pub sigma2_beta: f64,
    pub a_u: f64,
    pub b_u: f64,
    pub rho: f64,
    pub sigma2_mu: f64,
    pub psi: Option<Vec<Vec<f64>>>,
    pub nu: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub relative_tol: bool,
}

impl From<&PriorConfig> for PriorRecord {
    fn from(p: &PriorConfig) -> Self {
        PriorRecord {
            sigma2_beta: p.sigma2_beta,
            a_u: p.a_u,
            b_u: p.b_u,
            rho: p.rho,
            sigma2_mu: p.sigma2_mu,
            psi: p.psi.as_ref().map(matrix_rows),
            nu: p.nu,
            tol: p.solver.tol,
            max_iter: p.solver.max_iter,
            relative_tol: p.solver.relative,
        }
    }
}

impl PriorRecord {
    pub fn to_config(&self) -> Result<PriorConfig> {
        let config = PriorConfig {
            sigma2_beta: self.sigma2_beta,
            a_u: self.a_u,
            b_u: self.b_u,
            rho: self.rho,
            sigma2_mu: self.sigma2_mu,
            psi: self.psi.as_deref().map(|r| rows_matrix(r, "psi")).transpose()?,
            nu: self.nu,
            solver: SolverControls {
                tol: self.tol,
                max_iter: self.max_iter,
                relative: self.relative_tol,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

/// Fit diagnostics stored alongside the parameters. Variational fits fill
/// the iteration fields; Gibbs fits fill the draw fields.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitMetadata {
    pub converged: bool,
    pub iterations: Option<usize>,
    pub final_lower_bound: Option<f64>,
    pub lb_trace: Option<Vec<f64>>,
    pub draws: Option<usize>,
    pub chain_summary: Option<Vec<ParamSummary>>,
    pub seed: Option<u64>,
}

/// Hard labels plus the underlying linear scores.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub labels: DVector<f64>,
    pub scores: DVector<f64>,
}

/// A fitted classifier ready to be saved, loaded, and applied.
///
/// `coefficients` is the stacked scoring vector: intercept first, one entry
/// per feature, then one entry per training group for random-intercept
/// models (in `group_names` order).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub variant: Variant,
    pub engine: Engine,
    pub feature_names: Vec<String>,
    /// Group levels of a random-intercept fit, in training order.
    pub group_names: Option<Vec<String>>,
    /// Column transform fitted on the training side, when standardization
    /// was on.
    pub standardize: Option<StandardizeTransform>,
    pub prior: PriorRecord,
    /// Fixed penalty of the basic variant.
    pub alpha: Option<f64>,
    pub coefficients: Vec<f64>,
    /// Posterior inclusion probability per selectable coefficient (sparse
    /// variant).
    pub inclusion: Option<Vec<f64>>,
    /// Feature-model mean for conditional imputation at prediction time
    /// (missing variant).
    pub imputation_mean: Option<Vec<f64>>,
    /// Feature-model precision, row-major (missing variant).
    pub imputation_precision: Option<Vec<Vec<f64>>>,
    pub metadata: FitMetadata,
}

impl ModelFile {
    /// Structural coherence: version, coefficient count, and the presence
    /// of exactly the fields the stored variant predicts with.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "model format version {} is not supported (this build reads version {})",
                self.format_version, MODEL_FORMAT_VERSION
            )));
        }
        let d = self.feature_names.len();
        let n_groups = self.group_names.as_ref().map_or(0, |g| g.len());
        if self.coefficients.len() != 1 + d + n_groups {
            return Err(Error::Data(format!(
                "{} coefficients for intercept + {d} features + {n_groups} group effects",
                self.coefficients.len()
            )));
        }
        if self.group_names.is_some() && self.variant != Variant::Mixed {
            return Err(Error::Data(format!(
                "group effects are only valid for the mixed variant, not {}",
                self.variant
            )));
        }
        if self.variant == Variant::Basic && self.alpha.is_none() {
            return Err(Error::Data("basic model file lacks its alpha".to_string()));
        }
        if self.variant == Variant::Sparse
            && self.inclusion.as_ref().map_or(true, |q| q.len() != d)
        {
            return Err(Error::Data(format!(
                "sparse model file needs {d} inclusion probabilities"
            )));
        }
        if self.variant == Variant::Missing {
            if self.imputation_mean.as_ref().map_or(true, |m| m.len() != d) {
                return Err(Error::Data(format!(
                    "missing-data model file needs a {d}-vector imputation mean"
                )));
            }
            let ok = self
                .imputation_precision
                .as_ref()
                .is_some_and(|p| p.len() == d && p.iter().all(|r| r.len() == d));
            if !ok {
                return Err(Error::Data(format!(
                    "missing-data model file needs a {d}x{d} imputation precision"
                )));
            }
        }
        if let Some(t) = &self.standardize {
            if t.center.len() != d || t.scale.len() != d {
                return Err(Error::Data(format!(
                    "standardization transform covers {} columns, model has {d}",
                    t.center.len()
                )));
            }
        }
        Ok(())
    }

    /// Error unless the stored variant (and engine, when given) match what
    /// the caller is about to do.
    pub fn require(&self, variant: Variant, engine: Option<Engine>) -> Result<()> {
        if self.variant != variant {
            return Err(Error::Data(format!(
                "model file holds a {} fit, not {variant}",
                self.variant
            )));
        }
        if let Some(e) = engine {
            if self.engine != e {
                return Err(Error::Data(format!(
                    "model file holds a {} fit, not {e}",
                    self.engine
                )));
            }
        }
        Ok(())
    }

    /// Write the model as pretty-printed JSON (exact float round-trip).
    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// Read and validate a model file.
    pub fn load(path: &Path) -> Result<ModelFile> {
        let text = fs::read_to_string(path)?;
        let model: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        model.validate()?;
        Ok(model)
    }

    /// Score new feature rows (raw scale; the stored transform is applied
    /// here). Random-intercept models need one group id per row; ids unseen
    /// in training contribute no group effect. The missing variant fills
    /// incomplete rows through its feature model; the others reject them.
    pub fn predict(
        &self,
        features: &DMatrix<f64>,
        groups: Option<&[String]>,
    ) -> Result<Prediction> {
        self.validate()?;
        let d = self.feature_names.len();
        if features.ncols() != d {
            return Err(Error::Dimension(format!(
                "{} feature columns, model has {d}",
                features.ncols()
            )));
        }
        let std_feats = match &self.standardize {
            Some(t) => t.apply(features)?,
            None => features.clone(),
        };
        let filled = if self.variant == Variant::Missing {
            let mean = DVector::from_column_slice(self.imputation_mean.as_ref().unwrap());
            let precision = rows_matrix(self.imputation_precision.as_ref().unwrap(), "precision")?;
            conditional_fill_rows(&std_feats, &mean, &precision)?
        } else {
            for i in 0..std_feats.nrows() {
                for j in 0..d {
                    if std_feats[(i, j)].is_nan() {
                        return Err(Error::Data(format!(
                            "row {i} is missing column '{}'; a {} model cannot score incomplete rows",
                            self.feature_names[j], self.variant
                        )));
                    }
                }
            }
            std_feats
        };
        let base = DVector::from_column_slice(&self.coefficients[..1 + d]);
        let design = filled.insert_column(0, 1.0);
        let mut scores = decision_values(&base, &design)?;
        if let Some(names) = &self.group_names {
            let ids = groups.ok_or_else(|| {
                Error::Data("model has group effects; supply one group id per row".to_string())
            })?;
            if ids.len() != features.nrows() {
                return Err(Error::Dimension(format!(
                    "{} group ids for {} rows",
                    ids.len(),
                    features.nrows()
                )));
            }
            for (i, id) in ids.iter().enumerate() {
                if let Some(k) = names.iter().position(|n| n == id) {
                    scores[i] += self.coefficients[1 + d + k];
                }
            }
        }
        let labels = scores.map(|s| if s >= 0.0 { 1.0 } else { -1.0 });
        Ok(Prediction { labels, scores })
    }
}

/// Fit the requested variant/engine on a dataset and package the result.
///
/// Standardization (when on) is fitted here and stored in the file. The
/// mixed variant uses the random-intercept design when the data carries
/// groups and the penalty design otherwise; the other variants ignore
/// groups.
pub fn fit_to_model(
    data: &LabeledDataset,
    fitter: &FitterSpec,
    standardize: bool,
) -> Result<ModelFile> {
    fitter.validate()?;
    let transform = if standardize {
        Some(StandardizeTransform::fit(&data.features)?)
    } else {
        None
    };
    let feats = match &transform {
        Some(t) => t.apply(&data.features)?,
        None => data.features.clone(),
    };
    let std_data = LabeledDataset::new(
        feats,
        data.labels.clone(),
        data.feature_names.clone(),
        data.groups.clone(),
    )?;
    let prior = &fitter.prior;
    let y = &std_data.labels;

    let mut group_names = None;
    let mut alpha = None;
    let mut inclusion = None;
    let mut imputation_mean = None;
    let mut imputation_precision = None;

    let (coefficients, metadata) = match (fitter.variant, fitter.engine) {
        (Variant::Basic, Engine::Vb) => {
            alpha = Some(fitter.alpha);
            let x = std_data.features.clone().insert_column(0, 1.0);
            let fit = fit_vb_basic(&x, y, fitter.alpha, &prior.solver, None)?;
            (fit.mu.as_slice().to_vec(), vb_metadata(fit.converged, &fit.lb_trace))
        }
        (Variant::Basic, Engine::Gibbs) => {
            alpha = Some(fitter.alpha);
            let x = std_data.features.clone().insert_column(0, 1.0);
            let chain = gibbs_basic(&x, y, fitter.alpha, &fitter.gibbs)?;
            (chain.means().as_slice().to_vec(), gibbs_metadata(&chain, fitter.gibbs.seed))
        }
        (Variant::Mixed, Engine::Vb) => {
            let design = match &std_data.groups {
                Some(g) => {
                    group_names = Some(g.names.clone());
                    build_random_intercept_design(&std_data.features, g)?
                }
                None => build_penalty_design(&std_data.features)?,
            };
            let fit = fit_vb_mixed(&design, y, prior, None)?;
            (fit.mu.as_slice().to_vec(), vb_metadata(fit.converged, &fit.lb_trace))
        }
        (Variant::Mixed, Engine::Gibbs) => {
            let design = match &std_data.groups {
                Some(g) => {
                    group_names = Some(g.names.clone());
                    build_random_intercept_design(&std_data.features, g)?
                }
                None => build_penalty_design(&std_data.features)?,
            };
            let chain = gibbs_mixed(&design, y, prior, &fitter.gibbs)?;
            let q = design.p() + design.m();
            let theta: Vec<f64> = chain.means().iter().copied().take(q).collect();
            (theta, gibbs_metadata(&chain, fitter.gibbs.seed))
        }
        (Variant::Sparse, Engine::Vb) => {
            let design = build_penalty_design(&std_data.features)?;
            let fit = fit_vb_sparse(&design, y, prior, None)?;
            inclusion = Some(fit.mu_gamma.as_slice().to_vec());
            (
                fit.effective_coefficients().as_slice().to_vec(),
                vb_metadata(fit.converged, &fit.lb_trace),
            )
        }
        (Variant::Sparse, Engine::Gibbs) => {
            let design = build_penalty_design(&std_data.features)?;
            let chain = gibbs_sparse(&design, y, prior, &fitter.gibbs)?;
            inclusion = Some(inclusion_probabilities(&chain).as_slice().to_vec());
            (
                effective_coefficient_means(&chain).as_slice().to_vec(),
                gibbs_metadata(&chain, fitter.gibbs.seed),
            )
        }
        (Variant::Missing, Engine::Vb) => {
            let fit = fit_vb_missing(&std_data, prior, None)?;
            imputation_mean = Some(fit.mu_mean.as_slice().to_vec());
            imputation_precision = Some(matrix_rows(&fit.mean_inv_cov));
            (fit.mu.as_slice().to_vec(), vb_metadata(fit.converged, &fit.lb_trace))
        }
        (Variant::Missing, Engine::Gibbs) => {
            let chain = gibbs_missing(&std_data, prior, &fitter.gibbs)?;
            let (theta, mu, sigma) = chain_imputation_summary(&chain)?;
            imputation_mean = Some(mu.as_slice().to_vec());
            imputation_precision = Some(matrix_rows(&SpdChol::new(&sigma)?.inverse()));
            (theta.as_slice().to_vec(), gibbs_metadata(&chain, fitter.gibbs.seed))
        }
    };

    let model = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        variant: fitter.variant,
        engine: fitter.engine,
        feature_names: std_data.feature_names.clone(),
        group_names,
        standardize: transform,
        prior: PriorRecord::from(prior),
        alpha,
        coefficients,
        inclusion,
        imputation_mean,
        imputation_precision,
        metadata,
    };
    model.validate()?;
    Ok(model)
}

fn vb_metadata(converged: bool, lb_trace: &[f64]) -> FitMetadata {
    FitMetadata {
        converged,
        iterations: Some(lb_trace.len()),
        final_lower_bound: lb_trace.last().copied(),
        lb_trace: Some(lb_trace.to_vec()),
        draws: None,
        chain_summary: None,
        seed: None,
    }
}

fn gibbs_metadata(chain: &GibbsChain, seed: u64) -> FitMetadata {
    FitMetadata {
        converged: true,
        iterations: None,
        final_lower_bound: None,
        lb_trace: None,
        draws: Some(chain.n_draws()),
        chain_summary: Some(posterior_summary(chain)),
        seed: Some(seed),
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Data(format!("{what} matrix is not square")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}
