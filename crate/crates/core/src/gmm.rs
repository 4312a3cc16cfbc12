//! Gaussian mixture over window-augmented states.
//!
//! A model is either seeded from annotated demonstrations ([`weak_init`], one
//! component per gesture label) or from k-means++ clusters
//! ([`kmeans_init`]), then refined with [`em_fit`] on the unlabelled rows.
//! Components keep their labels through EM, so [`predict_labels`] returns
//! gesture names for weakly initialized models.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::AugmentedMatrix;

/// Ridge added to every covariance, relative to its mean diagonal entry.
pub const RIDGE_FACTOR: f64 = 1e-6;
/// Default relative log-likelihood tolerance for [`em_fit`].
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default EM iteration cap.
pub const DEFAULT_MAX_ITER: usize = 300;
/// Lloyd iteration cap in [`kmeans_init`].
pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub weight: f64,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
    pub dimension: usize,
    /// Log-likelihood of the data at each EM iteration, starting with the
    /// initial model.
    pub fit_trace: Vec<f64>,
}

/// Stopping rule for [`em_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Hard assignments and posteriors for each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<String>,
    pub components: Vec<usize>,
    /// Rows x components; each row sums to one.
    pub posteriors: DMatrix<f64>,
}

/// A row where the predicted label changes.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPoint {
    /// Last row carrying `from`.
    pub row: usize,
    /// Features of the first row carrying `to`.
    pub features: Vec<f64>,
    pub from: String,
    pub to: String,
}

fn mean_diagonal(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum() / m.nrows() as f64
}

/// Symmetrize and add `eps * I`, with `eps` relative to the mean diagonal
/// entry, or `fallback` when that is zero. Returns the ridge used.
pub fn regularize(cov: &mut DMatrix<f64>, fallback: f64) -> f64 {
    let sym = (&*cov + cov.transpose()) * 0.5;
    *cov = sym;
    let mut eps = RIDGE_FACTOR * mean_diagonal(cov);
    if !(eps > 0.0) {
        eps = fallback;
    }
    for i in 0..cov.nrows() {
        cov[(i, i)] += eps;
    }
    eps
}

/// Ridge for degenerate (zero-spread) groups, taken from the spread of the
/// whole data set.
fn fallback_ridge(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows() as f64;
    let mut total = 0.0;
    for col in x.column_iter() {
        let m = col.sum() / n;
        total += col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    }
    let eps = RIDGE_FACTOR * total / x.ncols() as f64;
    if eps > 0.0 {
        eps
    } else {
        RIDGE_FACTOR
    }
}

/// Mean and maximum-likelihood covariance of the given rows.
fn moments(x: &DMatrix<f64>, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(d);
    for &r in rows {
        mean += x.row(r).transpose();
    }
    mean /= n;
    let mut centered = DMatrix::zeros(d, rows.len());
    for (j, &r) in rows.iter().enumerate() {
        centered.set_column(j, &(x.row(r).transpose() - &mean));
    }
    let cov = &centered * centered.transpose() / n;
    (mean, cov)
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Label of component `k`, or `cluster_k` for anonymous components.
    pub fn component_name(&self, k: usize) -> String {
        self.components[k]
            .label
            .clone()
            .unwrap_or_else(|| format!("cluster_{k}"))
    }

    /// True when every component carries a label identity.
    pub fn is_labelled(&self) -> bool {
        self.components.iter().all(|c| c.label.is_some())
    }

    fn check_dimension(&self, x: &AugmentedMatrix) -> Result<()> {
        if x.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: x.dimension(),
            });
        }
        Ok(())
    }

    /// Per-row, per-component `log(w_k) + log N(x_t; mu_k, C_k)`, rows x K.
    fn log_joint(&self, xt: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = xt.ncols();
        let d = self.dimension;
        let mut out = DMatrix::zeros(n, self.n_components());
        for (k, c) in self.components.iter().enumerate() {
            let chol = Cholesky::new(c.covariance.clone())
                .ok_or(Error::SingularCovariance { component: k })?;
            let l = chol.l();
            let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            let log_norm = -0.5 * (d as f64 * (2.0 * PI).ln() + log_det) + c.weight.ln();
            let mut centered = xt.clone();
            for mut col in centered.column_iter_mut() {
                col -= &c.mean;
            }
            if !l.solve_lower_triangular_mut(&mut centered) {
                return Err(Error::SingularCovariance { component: k });
            }
            for (t, col) in centered.column_iter().enumerate() {
                out[(t, k)] = log_norm - 0.5 * col.norm_squared();
            }
        }
        Ok(out)
    }
}

/// Normalize each row of log-joint densities in place into posteriors and
/// return the total log-likelihood.
fn normalize_rows(log_joint: &mut DMatrix<f64>) -> f64 {
    let mut total = 0.0;
    for mut row in log_joint.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse;
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    total
}

/// Total log-likelihood `sum_t log sum_k w_k N(x_t; mu_k, C_k)`.
pub fn log_likelihood(model: &GmmModel, x: &AugmentedMatrix) -> Result<f64> {
    model.check_dimension(x)?;
    let mut lj = model.log_joint(&x.values.transpose())?;
    Ok(normalize_rows(&mut lj))
}

/// Seed one component per annotated label from labelled demonstrations.
/// Rows whose label is `None` are ignored.
pub fn weak_init(labeled: &[(&AugmentedMatrix, &[Option<String>])]) -> Result<GmmModel> {
    let (first, _) = labeled.first().ok_or(Error::EmptyInput)?;
    let dim = first.dimension();
    let mut parts = Vec::with_capacity(labeled.len());
    for (x, labels) in labeled {
        if x.dimension() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.dimension(),
            });
        }
        if labels.len() != x.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: x.n_rows(),
                found: labels.len(),
            });
        }
        parts.push(*x);
    }
    let all = AugmentedMatrix::concat(&parts)?;
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut offset = 0;
    for (x, labels) in labeled {
        for (i, label) in labels.iter().enumerate() {
            if let Some(label) = label {
                classes.entry(label.as_str()).or_default().push(offset + i);
            }
        }
        offset += x.n_rows();
    }
    if classes.is_empty() {
        return Err(Error::InvalidInput("no labelled rows to initialize from".into()));
    }
    let total: usize = classes.values().map(Vec::len).sum();
    let fallback = fallback_ridge(&all.values);
    let mut components = Vec::with_capacity(classes.len());
    for (label, rows) in classes {
        if rows.len() < 2 {
            return Err(Error::ClassTooSmall {
                label: label.to_string(),
                rows: rows.len(),
            });
        }
        let (mean, mut covariance) = moments(&all.values, &rows);
        regularize(&mut covariance, fallback);
        components.push(GmmComponent {
            mean,
            covariance,
            weight: rows.len() as f64 / total as f64,
            label: Some(label.to_string()),
        });
    }
    Ok(GmmModel {
        components,
        dimension: dim,
        fit_trace: Vec::new(),
    })
}

fn squared_distance(x: &DMatrix<f64>, row: usize, center: &DVector<f64>) -> f64 {
    x.row(row)
        .iter()
        .zip(center.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum()
}

fn nearest(x: &DMatrix<f64>, row: usize, centers: &[DVector<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = squared_distance(x, row, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations; clusters become anonymous
/// mixture components.
pub fn kmeans_init(x: &AugmentedMatrix, k: usize, seed: u64) -> Result<GmmModel> {
    let n = x.n_rows();
    if k == 0 {
        return Err(Error::InvalidInput("number of clusters must be at least 1".into()));
    }
    if n < k {
        return Err(Error::InvalidInput(format!(
            "{n} rows cannot form {k} clusters"
        )));
    }
    let values = &x.values;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centers: Vec<DVector<f64>> = vec![x.row(rng.random_range(0..n))];
    let mut min_d2: Vec<f64> = (0..n).map(|i| squared_distance(values, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = min_d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in min_d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = x.row(pick);
        for (i, d) in min_d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(values, i, &c));
        }
        centers.push(c);
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let next: Vec<usize> = (0..n).map(|i| nearest(values, i, &centers).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
        let mut sums = vec![DVector::zeros(x.dimension()); k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignment.iter().enumerate() {
            sums[a] += x.row(i);
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = &sums[j] / counts[j] as f64;
            }
        }
        // Empty clusters take the point farthest from its own centroid.
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let mut far = (0, -1.0);
            for (i, &a) in assignment.iter().enumerate() {
                if counts[a] < 2 {
                    continue;
                }
                let d = squared_distance(values, i, &centers[a]);
                if d > far.1 {
                    far = (i, d);
                }
            }
            let (i, _) = far;
            counts[assignment[i]] -= 1;
            assignment[i] = j;
            counts[j] = 1;
            centers[j] = x.row(i);
        }
    }

    let fallback = fallback_ridge(values);
    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let rows: Vec<usize> = (0..n).filter(|&i| assignment[i] == j).collect();
        let (mean, mut covariance) = moments(values, &rows);
        regularize(&mut covariance, fallback);
        components.push(GmmComponent {
            mean,
            covariance,
            weight: rows.len() as f64 / n as f64,
            label: None,
        });
    }
    Ok(GmmModel {
        components,
        dimension: x.dimension(),
        fit_trace: Vec::new(),
    })
}

/// Expectation-maximization from `init` until the relative log-likelihood
/// improvement drops below `config.tol` or `config.max_iter` M-steps ran.
pub fn em_fit(x: &AugmentedMatrix, init: &GmmModel, config: &EmConfig) -> Result<GmmModel> {
    init.check_dimension(x)?;
    if !(config.tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "EM tolerance must be positive, got {}",
            config.tol
        )));
    }
    if init.components.is_empty() {
        return Err(Error::InvalidInput("model has no components".into()));
    }
    let n = x.n_rows();
    let d = x.dimension();
    let xt = x.values.transpose();
    let fallback = fallback_ridge(&x.values);
    let freeze_below = 10.0 * d as f64 * f64::EPSILON;

    let mut model = init.clone();
    model.fit_trace.clear();
    let mut resp = model.log_joint(&xt)?;
    let mut ll = normalize_rows(&mut resp);
    if !ll.is_finite() {
        return Err(Error::NonFiniteLogLikelihood { iteration: 0 });
    }
    model.fit_trace.push(ll);

    for iteration in 1..=config.max_iter {
        for (k, c) in model.components.iter_mut().enumerate() {
            let r = resp.column(k);
            let mass: f64 = r.sum();
            c.weight = mass / n as f64;
            if mass < freeze_below {
                continue;
            }
            let mean = &xt * r / mass;
            let mut scaled = xt.clone();
            for (t, mut col) in scaled.column_iter_mut().enumerate() {
                col -= &mean;
                col *= r[t].sqrt();
            }
            let mut cov = &scaled * scaled.transpose() / mass;
            let scatter = cov.clone();
            regularize(&mut cov, fallback);
            // The ridge moves the update off the exact maximizer, which can
            // cost a little likelihood once a covariance is ill-conditioned.
            // Keep the previous covariance whenever the ridged one scores
            // lower on this component's expected log-likelihood.
            let candidate = expected_log_density(&cov, &scatter, None);
            let shift = &c.mean - &mean;
            let current = expected_log_density(&c.covariance, &scatter, Some(&shift));
            c.mean = mean;
            if candidate >= current {
                c.covariance = cov;
            }
        }
        resp = model.log_joint(&xt)?;
        let next = normalize_rows(&mut resp);
        if !next.is_finite() {
            return Err(Error::NonFiniteLogLikelihood { iteration });
        }
        model.fit_trace.push(next);
        let improvement = (next - ll) / ll.abs().max(f64::MIN_POSITIVE);
        ll = next;
        if improvement < config.tol {
            break;
        }
    }
    Ok(model)
}

/// Per-sample expected Gaussian log-density (without the `2 pi` term) for
/// data with the given scatter, under covariance `cov` and a mean offset from
/// the data mean of `shift`. Returns `-inf` when `cov` is not positive definite.
fn expected_log_density(cov: &DMatrix<f64>, scatter: &DMatrix<f64>, shift: Option<&DVector<f64>>) -> f64 {
    let Some(chol) = Cholesky::new(cov.clone()) else {
        return f64::NEG_INFINITY;
    };
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let mut second = scatter.clone();
    if let Some(s) = shift {
        second += s * s.transpose();
    }
    -0.5 * (log_det + chol.solve(&second).trace())
}

/// Assign each row to its most probable component (lowest index on ties).
pub fn predict_labels(model: &GmmModel, x: &AugmentedMatrix) -> Result<Prediction> {
    model.check_dimension(x)?;
    let mut posteriors = model.log_joint(&x.values.transpose())?;
    normalize_rows(&mut posteriors);
    let components: Vec<usize> = posteriors
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for k in 1..row.len() {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    let names: Vec<String> = (0..model.n_components())
        .map(|k| model.component_name(k))
        .collect();
    Ok(Prediction {
        labels: components.iter().map(|&k| names[k].clone()).collect(),
        components,
        posteriors,
    })
}

/// Rows `t` with `labels[t] != labels[t + 1]`, carrying the features of row `t + 1`.
pub fn transition_points<S: AsRef<str>>(
    labels: &[S],
    x: &AugmentedMatrix,
) -> Result<Vec<TransitionPoint>> {
    if labels.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            found: labels.len(),
        });
    }
    Ok(labels
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].as_ref() != w[1].as_ref())
        .map(|(t, w)| TransitionPoint {
            row: t,
            features: x.values.row(t + 1).iter().copied().collect(),
            from: w[0].as_ref().to_string(),
            to: w[1].as_ref().to_string(),
        })
        .collect())
}

// Model file: JSON with full-precision floats.

const MODEL_FORMAT: &str = "kinseg-gmm/1";

#[derive(Serialize, Deserialize)]
struct ComponentFile {
    label: Option<String>,
    weight: f64,
    mean: Vec<f64>,
    /// Row-major.
    covariance: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    dimension: usize,
    n_components: usize,
    components: Vec<ComponentFile>,
    fit_trace: Vec<f64>,
}

impl GmmModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            dimension: self.dimension,
            n_components: self.n_components(),
            components: self
                .components
                .iter()
                .map(|c| ComponentFile {
                    label: c.label.clone(),
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    covariance: c.covariance.transpose().iter().copied().collect(),
                })
                .collect(),
            fit_trace: self.fit_trace.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("model file: {e}")))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::InvalidInput(format!(
                "unsupported model format '{}'",
                file.format
            )));
        }
        if file.components.len() != file.n_components {
            return Err(Error::DimensionMismatch {
                expected: file.n_components,
                found: file.components.len(),
            });
        }
        let d = file.dimension;
        let components = file
            .components
            .into_iter()
            .map(|c| {
                if c.mean.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: c.mean.len(),
                    });
                }
                if c.covariance.len() != d * d {
                    return Err(Error::DimensionMismatch {
                        expected: d * d,
                        found: c.covariance.len(),
                    });
                }
                Ok(GmmComponent {
                    mean: DVector::from_vec(c.mean),
                    covariance: DMatrix::from_row_slice(d, d, &c.covariance),
                    weight: c.weight,
                    label: c.label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            components,
            dimension: d,
            fit_trace: file.fit_trace,
        })
    }
}

/// Cholesky factor of a covariance, if positive definite.
pub fn cholesky(cov: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(cov.clone())
}
