//! Privacy and utility metrics: outlier replication error, OLS and lasso
//! utility, selection stability, and relative privacy efficiency.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::matrix::sym_eigen;
use crate::rng::RngStream;

/// Outlier replication error: mean normalized squared distance from each
/// original outlier row to its nearest neighbor among all anonymized rows.
/// Higher means better privacy.
pub fn ore(original: &DataMatrix, anonymized: &DataMatrix, outliers: &[usize]) -> Result<f64> {
    if outliers.is_empty() {
        return Err(Error::EmptyOutlierSet);
    }
    if original.ncols() != anonymized.ncols() {
        return Err(Error::ShapeError {
            expected: format!("{} columns", original.ncols()),
            got: format!("{} columns", anonymized.ncols()),
        });
    }
    let x = original.values();
    let a = anonymized.values();
    let mut total = 0.0;
    for &k in outliers {
        let row = x.row(k);
        let norm2 = row.norm_squared();
        if norm2 == 0.0 {
            return Err(Error::UndefinedNormalization { row: k });
        }
        let mut best = f64::INFINITY;
        for i in 0..a.nrows() {
            let d = (row - a.row(i)).norm_squared();
            if d < best {
                best = d;
            }
        }
        total += best / norm2;
    }
    Ok(total / outliers.len() as f64)
}

/// Ordinary least squares without intercept.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::ShapeError {
            expected: format!("{} rows", x.nrows()),
            got: format!("{} responses", y.len()),
        });
    }
    let gram = crate::matrix::SymMatrix::new(x.transpose() * x)?;
    let eig = sym_eigen(&gram)?;
    if *eig.values.last().unwrap() <= 1e-10 * eig.values[0].max(0.0) {
        return Err(Error::SingularDesign);
    }
    let chol = gram
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(Error::SingularDesign)?;
    Ok(chol.solve(&(x.transpose() * y)))
}

pub fn utility_distance(beta_true: &DVector<f64>, beta_hat: &DVector<f64>) -> Result<f64> {
    if beta_true.len() != beta_hat.len() {
        return Err(Error::ShapeError {
            expected: format!("{} coefficients", beta_true.len()),
            got: format!("{}", beta_hat.len()),
        });
    }
    Ok((beta_true - beta_hat).norm())
}

/// Lasso solution with intercept, reported on the original scale.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub intercept: f64,
    pub coefficients: DVector<f64>,
    pub selected: BTreeSet<usize>,
    pub lambda: f64,
}

struct Standardized {
    x: DMatrix<f64>,
    x_mean: DVector<f64>,
    x_scale: DVector<f64>,
    y_centered: DVector<f64>,
    y_mean: f64,
}

fn standardize(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Standardized> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let x_mean = crate::matrix::column_means(x);
    let mut xs = crate::matrix::center_rows(x, &x_mean);
    let mut x_scale = DVector::from_element(p, 1.0);
    for j in 0..p {
        let var = xs.column(j).norm_squared() / nf;
        if var > 1e-24 {
            let s = var.sqrt();
            x_scale[j] = s;
            let col = xs.column(j) / s;
            xs.set_column(j, &col);
        }
        // Constant columns keep scale 1; their centered values are zero so
        // the coefficient stays zero.
    }
    let y_mean = y.sum() / nf;
    let y_centered = y.map(|v| v - y_mean);
    if y_centered.norm_squared() / nf < 1e-24 {
        return Err(Error::DegenerateResponse);
    }
    Ok(Standardized {
        x: xs,
        x_mean,
        x_scale,
        y_centered,
        y_mean,
    })
}

/// Cyclic coordinate descent at one penalty level, warm-started from `beta`.
/// Columns must be standardized (mean 0, variance 1 with divisor n).
fn coordinate_descent(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    beta: &mut DVector<f64>,
    resid: &mut DVector<f64>,
) {
    let (n, p) = x.shape();
    let nf = n as f64;
    let max_sweeps = 1000;
    let tol = 1e-9;
    for _ in 0..max_sweeps {
        let mut max_change = 0.0f64;
        for j in 0..p {
            let xj = x.column(j);
            let xj_var = xj.norm_squared() / nf;
            if xj_var == 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = xj.dot(resid) / nf + old * xj_var;
            let new = soft_threshold(rho, lambda) / xj_var;
            if new != old {
                resid.axpy(old - new, &xj.clone_owned(), 1.0);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if max_change <= tol {
            break;
        }
    }
    let _ = y;
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// 100-point log-spaced penalty grid from lambda_max down to 1e-4 lambda_max.
fn lambda_grid(std: &Standardized) -> Vec<f64> {
    let n = std.x.nrows() as f64;
    let lambda_max = (0..std.x.ncols())
        .map(|j| (std.x.column(j).dot(&std.y_centered) / n).abs())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let lo = (lambda_max * 1e-4).ln();
    let hi = lambda_max.ln();
    (0..100)
        .map(|i| (hi + (lo - hi) * i as f64 / 99.0).exp())
        .collect()
}

fn path_fit(std: &Standardized, grid: &[f64]) -> Vec<DVector<f64>> {
    let p = std.x.ncols();
    let mut beta = DVector::zeros(p);
    let mut resid = std.y_centered.clone();
    let mut path = Vec::with_capacity(grid.len());
    for &lambda in grid {
        coordinate_descent(&std.x, &std.y_centered, lambda, &mut beta, &mut resid);
        path.push(beta.clone());
    }
    path
}

fn destandardize(std: &Standardized, beta_std: &DVector<f64>) -> (f64, DVector<f64>) {
    let p = beta_std.len();
    let mut coef = DVector::zeros(p);
    for j in 0..p {
        coef[j] = beta_std[j] / std.x_scale[j];
    }
    let intercept = std.y_mean - coef.dot(&std.x_mean);
    (intercept, coef)
}

/// Lasso at a single penalty level (standardized scale), mostly a test and
/// diagnostics entry point.
pub fn lasso_at(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<LassoFit> {
    let std = standardize(x, y)?;
    let mut beta = DVector::zeros(x.ncols());
    let mut resid = std.y_centered.clone();
    coordinate_descent(&std.x, &std.y_centered, lambda, &mut beta, &mut resid);
    let (intercept, coefficients) = destandardize(&std, &beta);
    let selected = (0..x.ncols()).filter(|&j| beta[j] != 0.0).collect();
    Ok(LassoFit {
        intercept,
        coefficients,
        selected,
        lambda,
    })
}

/// Lasso with k-fold cross-validation over the penalty grid; the CV-minimum
/// rule picks the penalty and the model is refit on the full data.
pub fn lasso_cv(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: usize,
    rng: &mut RngStream,
) -> Result<LassoFit> {
    let n = x.nrows();
    if n < folds {
        return Err(Error::TooFewRows {
            needed: folds,
            got: n,
        });
    }
    let std_full = standardize(x, y)?;
    let grid = lambda_grid(&std_full);

    // Fixed random partition into folds.
    let mut assignment: Vec<usize> = (0..n).map(|i| i % folds).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        assignment.swap(i, j);
    }

    let mut cv_err = vec![0.0f64; grid.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
        let xt = x.select_rows(train.iter());
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let std_t = standardize(&xt, &yt)?;
        let path = path_fit(&std_t, &grid);
        for (g, beta_std) in path.iter().enumerate() {
            let (b0, coef) = destandardize(&std_t, beta_std);
            let mut sse = 0.0;
            for &i in &test {
                let pred = b0 + x.row(i).transpose().dot(&coef);
                sse += (y[i] - pred).powi(2);
            }
            cv_err[g] += sse;
        }
    }

    let mut best = 0usize;
    for g in 1..grid.len() {
        if cv_err[g] < cv_err[best] {
            best = g;
        }
    }

    let path = path_fit(&std_full, &grid[..=best]);
    let beta_std = path.last().unwrap();
    let (intercept, coefficients) = destandardize(&std_full, beta_std);
    let selected = (0..x.ncols()).filter(|&j| beta_std[j] != 0.0).collect();
    Ok(LassoFit {
        intercept,
        coefficients,
        selected,
        lambda: grid[best],
    })
}

/// Confusion counts for variable selection against the original model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionOutcome {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SelectionMetrics {
    pub recall: f64,
    pub fpr: f64,
    pub precision: f64,
    pub jaccard: f64,
    /// Set when any denominator was empty.
    pub degenerate: bool,
}

pub fn selection_metrics(
    original: &BTreeSet<usize>,
    anonymized: &BTreeSet<usize>,
    universe: usize,
) -> SelectionMetrics {
    let tp = original.intersection(anonymized).count();
    let fp = anonymized.difference(original).count();
    let fn_ = original.difference(anonymized).count();
    let tn = universe - tp - fp - fn_;
    let both_empty = original.is_empty() && anonymized.is_empty();
    let mut degenerate = false;

    let ratio = |num: usize, den: usize| -> f64 {
        if den == 0 {
            if both_empty {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    };
    if tp + fn_ == 0 || tp + fp == 0 || tp + fp + fn_ == 0 || fp + tn == 0 {
        degenerate = true;
    }
    SelectionMetrics {
        recall: ratio(tp, tp + fn_),
        fpr: if fp + tn == 0 {
            0.0
        } else {
            fp as f64 / (fp + tn) as f64
        },
        precision: ratio(tp, tp + fp),
        jaccard: ratio(tp, tp + fp + fn_),
        degenerate,
    }
}

/// Utility metric kinds entering the efficiency ratio denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilityKind {
    Distance,
    Recall,
    Fpr,
    Precision,
    Jaccard,
}

impl UtilityKind {
    pub const ALL: [UtilityKind; 5] = [
        UtilityKind::Distance,
        UtilityKind::Recall,
        UtilityKind::Fpr,
        UtilityKind::Precision,
        UtilityKind::Jaccard,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            UtilityKind::Distance => "distance",
            UtilityKind::Recall => "recall",
            UtilityKind::Fpr => "fpr",
            UtilityKind::Precision => "precision",
            UtilityKind::Jaccard => "jaccard",
        }
    }
}

/// Relative privacy efficiency: sqrt(ORE) over the utility loss. Distance
/// and FPR enter as-is; recall, precision and Jaccard as (1 - metric).
pub fn rpe(ore_value: f64, utility_value: f64, kind: UtilityKind) -> Result<f64> {
    let denom = match kind {
        UtilityKind::Distance | UtilityKind::Fpr => utility_value,
        UtilityKind::Recall | UtilityKind::Precision | UtilityKind::Jaccard => 1.0 - utility_value,
    };
    if denom <= 0.0 {
        return Err(Error::InfiniteEfficiency);
    }
    Ok(ore_value.sqrt() / denom)
}

/// Ratio of mean efficiencies with a percentile bootstrap interval; the two
/// methods' replications are resampled independently.
pub fn rpe_ratio_ci(
    icsa_samples: &[f64],
    sa_samples: &[f64],
    b: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64, f64)> {
    if icsa_samples.is_empty() || sa_samples.is_empty() {
        return Err(Error::ConditionNotMet("empty RPE sample set".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sa_mean = mean(sa_samples);
    if sa_mean == 0.0 {
        return Err(Error::UndefinedRatio);
    }
    let ratio = mean(icsa_samples) / sa_mean;

    let mut boots = Vec::with_capacity(b);
    for _ in 0..b {
        let num: f64 = (0..icsa_samples.len())
            .map(|_| icsa_samples[rng.random_range(0..icsa_samples.len())])
            .sum::<f64>()
            / icsa_samples.len() as f64;
        let den: f64 = (0..sa_samples.len())
            .map(|_| sa_samples[rng.random_range(0..sa_samples.len())])
            .sum::<f64>()
            / sa_samples.len() as f64;
        let r = num / den;
        if r.is_finite() {
            boots.push(r);
        }
    }
    boots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((
        ratio,
        percentile(&boots, 0.025),
        percentile(&boots, 0.975),
    ))
}

/// Linear-interpolation percentile of a sorted sample.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Median and quartiles of an unsorted sample.
pub fn median_iqr(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (
        percentile(&v, 0.5),
        percentile(&v, 0.25),
        percentile(&v, 0.75),
    )
}
