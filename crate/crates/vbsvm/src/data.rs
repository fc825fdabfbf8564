//! Dataset container, design construction, standardization, and holdout
//! splitting.
//!
//! Missing predictor cells are represented as `NaN` inside the feature
//! matrix — there is exactly one source of truth for missingness, and any
//! code that forgets to handle it produces loud `NaN`s instead of silently
//! wrong numbers. Labels are always stored as -1/+1.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Group labels for random-intercept designs: `index[i]` is the group of row
/// `i`, numbered in order of first appearance; `names` maps that number back
/// to the original identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupInfo {
    pub index: Vec<usize>,
    pub names: Vec<String>,
}

impl GroupInfo {
    /// Build group info from raw per-row identifiers, numbering groups by
    /// first appearance.
    pub fn from_ids<S: AsRef<str>>(ids: &[S]) -> Self {
        let mut names: Vec<String> = Vec::new();
        let mut index = Vec::with_capacity(ids.len());
        for id in ids {
            let id = id.as_ref();
            let k = match names.iter().position(|n| n == id) {
                Some(k) => k,
                None => {
                    names.push(id.to_string());
                    names.len() - 1
                }
            };
            index.push(k);
        }
        GroupInfo { index, names }
    }

    pub fn n_groups(&self) -> usize {
        self.names.len()
    }
}

/// A classification dataset: `n x d` features (missing = `NaN`), labels in
/// -1/+1, optional group identifiers.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: DMatrix<f64>,
    pub labels: DVector<f64>,
    pub feature_names: Vec<String>,
    pub groups: Option<GroupInfo>,
}

impl LabeledDataset {
    /// Validated constructor; labels must be -1/+1 and shapes must agree.
    pub fn new(
        features: DMatrix<f64>,
        labels: DVector<f64>,
        feature_names: Vec<String>,
        groups: Option<GroupInfo>,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                n
            )));
        }
        if n == 0 {
            return Err(Error::Data("empty dataset".to_string()));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::Dimension(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Data(
                "labels must be -1 or +1 after ingestion".to_string(),
            ));
        }
        if let Some(g) = &groups {
            if g.index.len() != n {
                return Err(Error::Dimension(format!(
                    "{} group ids for {} rows",
                    g.index.len(),
                    n
                )));
            }
        }
        Ok(LabeledDataset {
            features,
            labels,
            feature_names,
            groups,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// True if no cell is missing.
    pub fn is_complete(&self) -> bool {
        self.features.iter().all(|v| !v.is_nan())
    }

    /// True if every cell of row `i` is observed.
    pub fn row_complete(&self, i: usize) -> bool {
        self.features.row(i).iter().all(|v| !v.is_nan())
    }

    /// Indices of fully observed rows.
    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.row_complete(i)).collect()
    }

    /// Dataset restricted to `rows` (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.iter().any(|&i| i >= self.n_rows()) {
            return Err(Error::Dimension("row index out of range".to_string()));
        }
        let features = DMatrix::from_fn(rows.len(), self.n_features(), |i, j| {
            self.features[(rows[i], j)]
        });
        let labels = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.labels[i]));
        let groups = self.groups.as_ref().map(|g| GroupInfo {
            index: rows.iter().map(|&i| g.index[i]).collect(),
            names: g.names.clone(),
        });
        LabeledDataset::new(features, labels, self.feature_names.clone(), groups)
    }
}

/// Fixed-effect / random-effect design pair. Either block may be empty
/// (zero columns), but not both.
#[derive(Debug, Clone)]
pub struct DesignPair {
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl DesignPair {
    pub fn new(x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != z.nrows() {
            return Err(Error::Dimension(format!(
                "design blocks disagree on rows: {} vs {}",
                x.nrows(),
                z.nrows()
            )));
        }
        if x.ncols() + z.ncols() == 0 {
            return Err(Error::Dimension("design has no columns".to_string()));
        }
        if x.nrows() == 0 {
            return Err(Error::Dimension("design has no rows".to_string()));
        }
        Ok(DesignPair { x, z })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.z.ncols()
    }

    /// Concatenated design `C = [X Z]`.
    pub fn combined(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.n(), self.p() + self.m());
        c.view_mut((0, 0), (self.n(), self.p())).copy_from(&self.x);
        c.view_mut((0, self.p()), (self.n(), self.m())).copy_from(&self.z);
        c
    }
}

/// Penalty-form design: global intercept as the only fixed effect, all
/// predictors as penalized coefficients. The ridge penalty is then inferred
/// from the data through the random-effect variance.
pub fn build_penalty_design(features: &DMatrix<f64>) -> Result<DesignPair> {
    if features.ncols() == 0 {
        return Err(Error::Dimension(
            "penalty design needs at least one predictor column".to_string(),
        ));
    }
    DesignPair::new(
        DMatrix::from_element(features.nrows(), 1, 1.0),
        features.clone(),
    )
}

/// Random-intercept design: intercept plus predictors as fixed effects,
/// one indicator column per group as random effects.
pub fn build_random_intercept_design(
    features: &DMatrix<f64>,
    groups: &GroupInfo,
) -> Result<DesignPair> {
    let n = features.nrows();
    if groups.index.len() != n {
        return Err(Error::Dimension(format!(
            "{} group ids for {} rows",
            groups.index.len(),
            n
        )));
    }
    let m = groups.n_groups();
    if m == 0 {
        return Err(Error::Data("no groups present".to_string()));
    }
    let mut x = DMatrix::zeros(n, 1 + features.ncols());
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 0..features.ncols() {
            x[(i, 1 + j)] = features[(i, j)];
        }
    }
    let mut z = DMatrix::zeros(n, m);
    for (i, &g) in groups.index.iter().enumerate() {
        z[(i, g)] = 1.0;
    }
    DesignPair::new(x, z)
}

/// Column centering/scaling fitted on (the observed part of) one dataset and
/// applied to another.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StandardizeTransform {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StandardizeTransform {
    /// Fit per-column center (mean of observed entries) and scale (sample
    /// standard deviation, `n - 1` divisor, of observed entries). Columns
    /// with fewer than two observed entries or zero variance get scale 1.
    pub fn fit(features: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = (features.nrows(), features.ncols());
        if n == 0 || d == 0 {
            return Err(Error::Dimension("cannot standardize an empty matrix".to_string()));
        }
        let mut center = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let obs: Vec<f64> = (0..n)
                .map(|i| features[(i, j)])
                .filter(|v| !v.is_nan())
                .collect();
            if obs.is_empty() {
                return Err(Error::Data(format!(
                    "column {j} is missing in every row; cannot standardize"
                )));
            }
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            center[j] = mean;
            if obs.len() >= 2 {
                let ss = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                let sd = (ss / (obs.len() - 1) as f64).sqrt();
                if sd > 0.0 {
                    scale[j] = sd;
                }
            }
        }
        Ok(StandardizeTransform { center, scale })
    }

    /// Apply the transform; missing entries stay missing.
    pub fn apply(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.center.len() {
            return Err(Error::Dimension(format!(
                "transform has {} columns, data has {}",
                self.center.len(),
                features.ncols()
            )));
        }
        Ok(DMatrix::from_fn(features.nrows(), features.ncols(), |i, j| {
            (features[(i, j)] - self.center[j]) / self.scale[j]
        }))
    }

    /// Undo the transform (round-trips up to floating point).
    pub fn invert(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.center.len() {
            return Err(Error::Dimension(format!(
                "transform has {} columns, data has {}",
                self.center.len(),
                features.ncols()
            )));
        }
        Ok(DMatrix::from_fn(features.nrows(), features.ncols(), |i, j| {
            features[(i, j)] * self.scale[j] + self.center[j]
        }))
    }
}

/// Options for [`split_holdout`].
#[derive(Debug, Clone, Copy, Default)]
pub struct SplitOptions {
    /// Restrict the test side to fully observed rows.
    pub full_test_rows: bool,
}

/// Random train/test split with `round(n * train_fraction)` training rows.
///
/// Both classes must appear in the training side; the split is reshuffled up
/// to 100 times before giving up with a data error. With
/// [`SplitOptions::full_test_rows`] the test rows are drawn only from fully
/// observed rows (error if there are not enough).
pub fn split_holdout(
    data: &LabeledDataset,
    train_fraction: f64,
    rng: &mut RngState,
    opts: SplitOptions,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = data.n_rows();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Data(format!(
            "split of {n} rows at fraction {train_fraction} leaves an empty side"
        )));
    }
    let n_test = n - n_train;
    for _attempt in 0..100 {
        let (train, test) = if opts.full_test_rows {
            let mut complete = data.complete_rows();
            if complete.len() < n_test {
                return Err(Error::Data(format!(
                    "need {n_test} fully observed rows for the test side, have {}",
                    complete.len()
                )));
            }
            complete.shuffle(rng);
            let test: Vec<usize> = complete[..n_test].to_vec();
            let in_test: std::collections::HashSet<usize> = test.iter().copied().collect();
            let train: Vec<usize> = (0..n).filter(|i| !in_test.contains(i)).collect();
            (train, test)
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            let mut train: Vec<usize> = order[..n_train].to_vec();
            let mut test: Vec<usize> = order[n_train..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            (train, test)
        };
        let mut has_pos = false;
        let mut has_neg = false;
        for &i in &train {
            if data.labels[i] > 0.0 {
                has_pos = true;
            } else {
                has_neg = true;
            }
        }
        if has_pos && has_neg {
            let mut test = test;
            test.sort_unstable();
            return Ok((train, test));
        }
    }
    Err(Error::Data(
        "could not produce a training split containing both classes in 100 attempts".to_string(),
    ))
}
