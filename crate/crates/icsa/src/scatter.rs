//! Affine-equivariant location and scatter estimators across robustness
//! classes I-III.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::matrix::{column_means, SymMatrix};
use crate::rng::RngStream;

/// Breakdown class of an estimator; `Fixed` marks data-independent choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustnessClass {
    I,
    II,
    III,
    Fixed,
}

/// Location rule used when Tyler's shape is requested on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TylerLocation {
    #[default]
    SpatialMedian,
    Hr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScatterKind {
    MeanCov,
    Cov4,
    Tyler(TylerLocation),
    Hr,
    Mcd { alpha: f64 },
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterSpec {
    pub kind: ScatterKind,
    pub max_iter: usize,
    pub tol: f64,
}

impl ScatterSpec {
    fn with_kind(kind: ScatterKind) -> Self {
        Self {
            kind,
            max_iter: 200,
            tol: 1e-6,
        }
    }

    pub fn mean_cov() -> Self {
        Self::with_kind(ScatterKind::MeanCov)
    }

    pub fn cov4() -> Self {
        Self::with_kind(ScatterKind::Cov4)
    }

    pub fn tyler() -> Self {
        Self::with_kind(ScatterKind::Tyler(TylerLocation::SpatialMedian))
    }

    pub fn tyler_with_hr_location() -> Self {
        Self::with_kind(ScatterKind::Tyler(TylerLocation::Hr))
    }

    pub fn hr() -> Self {
        Self::with_kind(ScatterKind::Hr)
    }

    /// MCD with trim fraction alpha (0.5 or 0.75 in practice; alpha = 1
    /// degenerates to the sample covariance).
    pub fn mcd(alpha: f64) -> Self {
        Self::with_kind(ScatterKind::Mcd { alpha })
    }

    pub fn identity() -> Self {
        Self::with_kind(ScatterKind::Identity)
    }

    pub fn class(&self) -> RobustnessClass {
        match self.kind {
            ScatterKind::MeanCov | ScatterKind::Cov4 => RobustnessClass::I,
            ScatterKind::Tyler(_) | ScatterKind::Hr => RobustnessClass::II,
            ScatterKind::Mcd { .. } => RobustnessClass::III,
            ScatterKind::Identity => RobustnessClass::Fixed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScatterEstimate {
    pub location: DVector<f64>,
    pub scatter: SymMatrix,
    pub class: RobustnessClass,
    pub converged: bool,
    pub iterations: usize,
}

/// Sample mean and covariance with divisor n - 1.
pub fn mean_cov(x: &DataMatrix) -> Result<ScatterEstimate> {
    let (n, _) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let mean = column_means(x.values());
    let centered = crate::matrix::center_rows(x.values(), &mean);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok(ScatterEstimate {
        location: mean,
        scatter: SymMatrix::new(cov)?,
        class: RobustnessClass::I,
        converged: true,
        iterations: 0,
    })
}

/// Covariance matrix of fourth moments (FOBI scatter):
/// (1 / (n (p + 2))) sum r_i^2 (x_i - mean)(x_i - mean)' with Mahalanobis
/// radii r_i^2 taken with respect to the divisor-n covariance.
pub fn cov4(x: &DataMatrix) -> Result<ScatterEstimate> {
    let (n, p) = (x.nrows(), x.ncols());
    if n < p + 2 {
        return Err(Error::TooFewRows { needed: p + 2, got: n });
    }
    let mean = column_means(x.values());
    let centered = crate::matrix::center_rows(x.values(), &mean);
    let cov_n = SymMatrix::new(centered.transpose() * &centered / n as f64)?;
    let chol = cov_n
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(Error::SingularScatter { eigenvalue: 0.0 })?;

    let mut acc = DMatrix::zeros(p, p);
    for i in 0..n {
        let d = centered.row(i).transpose();
        let r2 = d.dot(&chol.solve(&d));
        acc += &d * d.transpose() * r2;
    }
    let scatter = acc / (n as f64 * (p as f64 + 2.0));
    Ok(ScatterEstimate {
        location: mean,
        scatter: SymMatrix::new(scatter)?,
        class: RobustnessClass::I,
        converged: true,
        iterations: 0,
    })
}

/// Result of the Weiszfeld iteration; `converged` is false when the
/// iteration budget ran out before the gradient dropped below tolerance.
#[derive(Debug, Clone)]
pub struct SpatialMedian {
    pub point: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Spatial median by the safeguarded (Vardi-Zhang) Weiszfeld iteration.
pub fn spatial_median(x: &DMatrix<f64>, tol: f64, max_iter: usize) -> SpatialMedian {
    let (n, p) = x.shape();
    if n == 1 {
        return SpatialMedian {
            point: x.row(0).transpose(),
            converged: true,
            iterations: 0,
        };
    }
    let mut y = column_means(x);
    let eps = 1e-12;
    for iter in 0..max_iter {
        let mut num = DVector::zeros(p);
        let mut denom = 0.0;
        let mut resid = DVector::zeros(p);
        let mut coincident = 0.0;
        for i in 0..n {
            let xi = x.row(i).transpose();
            let d = (&xi - &y).norm();
            if d < eps {
                coincident += 1.0;
                continue;
            }
            num += &xi / d;
            denom += 1.0 / d;
            resid += (&xi - &y) / d;
        }
        let rnorm = resid.norm();
        // Subgradient optimality: off data points the gradient must vanish;
        // on a data point the pull of the others must not exceed its weight.
        if rnorm <= tol || (coincident > 0.0 && rnorm <= coincident) {
            return SpatialMedian {
                point: y,
                converged: true,
                iterations: iter,
            };
        }
        let t = num / denom;
        y = if coincident == 0.0 {
            t
        } else {
            let gamma = (coincident / rnorm).min(1.0);
            &t * (1.0 - gamma) + &y * gamma
        };
    }
    SpatialMedian {
        point: y,
        converged: false,
        iterations: max_iter,
    }
}

/// Tyler's shape matrix about a fixed location, trace-normalized to p.
pub fn tyler_shape(
    x: &DataMatrix,
    location: &DVector<f64>,
    spec: &ScatterSpec,
) -> Result<ScatterEstimate> {
    let (n, p) = (x.nrows(), x.ncols());
    if n <= p {
        return Err(Error::TooFewRows { needed: p + 1, got: n });
    }
    let centered = crate::matrix::center_rows(x.values(), location);
    // Observations at the location itself carry no direction information
    // and drop out of the M-equation (as for the spatial median).
    let scale = (0..n).map(|i| centered.row(i).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::DegenerateRow { row: 0 });
    }
    let active: Vec<usize> = (0..n)
        .filter(|&i| centered.row(i).norm() > 1e-12 * scale)
        .collect();
    if active.len() <= p {
        return Err(Error::TooFewRows {
            needed: p + 1,
            got: active.len(),
        });
    }
    if p == 1 {
        return Ok(ScatterEstimate {
            location: location.clone(),
            scatter: SymMatrix::identity(1),
            class: RobustnessClass::II,
            converged: true,
            iterations: 0,
        });
    }

    let mut v = DMatrix::identity(p, p);
    let mut last_change = f64::INFINITY;
    for iter in 1..=spec.max_iter {
        let chol = v
            .clone()
            .cholesky()
            .ok_or(Error::SingularScatter { eigenvalue: 0.0 })?;
        let mut next = DMatrix::zeros(p, p);
        for &i in &active {
            let d = centered.row(i).transpose();
            let q = d.dot(&chol.solve(&d));
            if q <= 0.0 {
                return Err(Error::DegenerateRow { row: i });
            }
            next += &d * d.transpose() / q;
        }
        next *= p as f64 / active.len() as f64;
        next *= p as f64 / next.trace();
        last_change = (&next - &v).norm() / v.norm();
        v = next;
        if last_change <= spec.tol {
            return Ok(ScatterEstimate {
                location: location.clone(),
                scatter: SymMatrix::new(v)?,
                class: RobustnessClass::II,
                converged: true,
                iterations: iter,
            });
        }
    }
    Err(Error::NotConverged {
        max_iter: spec.max_iter,
        last_change,
    })
}

/// Hettmansperger-Randles estimator: simultaneous spatial-median-type
/// location and Tyler-type shape, alternated to a joint fixed point.
pub fn hr_estimate(x: &DataMatrix, spec: &ScatterSpec) -> Result<ScatterEstimate> {
    let (n, p) = (x.nrows(), x.ncols());
    if n <= p {
        return Err(Error::TooFewRows { needed: p + 1, got: n });
    }
    if p == 1 {
        let sm = spatial_median(x.values(), spec.tol, spec.max_iter);
        return Ok(ScatterEstimate {
            location: sm.point,
            scatter: SymMatrix::identity(1),
            class: RobustnessClass::II,
            converged: sm.converged,
            iterations: sm.iterations,
        });
    }

    let mut location = spatial_median(x.values(), spec.tol, spec.max_iter).point;
    let mut shape = SymMatrix::identity(p);
    let mut last_change = f64::INFINITY;
    let scale = column_means(x.values()).norm().max(1.0);

    for iter in 1..=spec.max_iter {
        let w_inv = crate::matrix::sym_pow(&shape, -0.5)?;
        let w = crate::matrix::sym_pow(&shape, 0.5)?;

        // Whitened residuals and their directions. Observations coinciding
        // with the current location have no direction and drop out, as in
        // the spatial median iteration.
        let centered = crate::matrix::center_rows(x.values(), &location);
        let resid: Vec<DVector<f64>> = (0..n)
            .map(|i| w_inv.as_matrix() * centered.row(i).transpose())
            .collect();
        let rscale = resid.iter().map(|e| e.norm()).fold(0.0, f64::max);
        if rscale == 0.0 {
            return Err(Error::DegenerateRow { row: 0 });
        }
        let mut step = DVector::zeros(p);
        let mut inv_norm_sum = 0.0;
        let mut outer = DMatrix::zeros(p, p);
        let mut active = 0usize;
        for e in &resid {
            let d = e.norm();
            if d <= 1e-12 * rscale {
                continue;
            }
            let u = e / d;
            step += &u;
            inv_norm_sum += 1.0 / d;
            outer += &u * u.transpose();
            active += 1;
        }
        if active <= p {
            return Err(Error::TooFewRows { needed: p + 1, got: active });
        }

        let new_location = &location + w.as_matrix() * step / inv_norm_sum;
        let mut new_shape = w.as_matrix() * (&outer * (p as f64 / active as f64)) * w.as_matrix();
        new_shape *= p as f64 / new_shape.trace();

        let loc_change = (&new_location - &location).norm() / scale;
        let shape_change = (&new_shape - shape.as_matrix()).norm() / shape.as_matrix().norm();
        location = new_location;
        shape = SymMatrix::new(new_shape)?;
        last_change = loc_change.max(shape_change);
        if last_change <= spec.tol {
            return Ok(ScatterEstimate {
                location,
                scatter: shape,
                class: RobustnessClass::II,
                converged: true,
                iterations: iter,
            });
        }
    }
    Err(Error::NotConverged {
        max_iter: spec.max_iter,
        last_change,
    })
}

const MCD_STARTS: usize = 500;
const MCD_KEEP: usize = 10;
const MCD_INITIAL_CSTEPS: usize = 2;

struct Subset {
    indices: Vec<usize>,
    det: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn subset_stats(x: &DMatrix<f64>, indices: &[usize]) -> Option<(DVector<f64>, DMatrix<f64>, f64)> {
    let p = x.ncols();
    let m = indices.len() as f64;
    let mut mean = DVector::zeros(p);
    for &i in indices {
        mean += x.row(i).transpose();
    }
    mean /= m;
    let mut cov = DMatrix::zeros(p, p);
    for &i in indices {
        let d = x.row(i).transpose() - &mean;
        cov += &d * d.transpose();
    }
    cov /= m;
    let chol = cov.clone().cholesky()?;
    let det: f64 = (0..p).map(|j| chol.l()[(j, j)].ln() * 2.0).sum();
    Some((mean, cov, det))
}

/// One concentration step: keep the h points closest in Mahalanobis
/// distance to the current subset's mean/covariance.
fn c_step(x: &DMatrix<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>, h: usize) -> Option<Vec<usize>> {
    let n = x.nrows();
    let chol = cov.clone().cholesky()?;
    let mut dist: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let d = x.row(i).transpose() - mean;
            (d.dot(&chol.solve(&d)), i)
        })
        .collect();
    dist.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mut idx: Vec<usize> = dist[..h].iter().map(|&(_, i)| i).collect();
    idx.sort_unstable();
    Some(idx)
}

fn run_c_steps(x: &DMatrix<f64>, start: Vec<usize>, h: usize, steps: Option<usize>) -> Option<Subset> {
    let (mut mean, mut cov, mut det) = subset_stats(x, &start)?;
    let mut indices = start;
    let mut taken = 0usize;
    loop {
        if let Some(limit) = steps {
            if taken >= limit {
                break;
            }
        }
        let next = c_step(x, &mean, &cov, h)?;
        taken += 1;
        if next == indices {
            break;
        }
        let (m2, c2, d2) = subset_stats(x, &next)?;
        indices = next;
        mean = m2;
        cov = c2;
        // C-steps never increase the determinant; equality means convergence.
        if d2 >= det && steps.is_none() {
            det = d2;
            break;
        }
        det = d2;
    }
    Some(Subset {
        indices,
        det,
        mean,
        cov,
    })
}

/// Prefer the smaller determinant; break exact ties by lexicographically
/// smaller index set so the result is deterministic.
fn better(a: &Subset, b: &Subset) -> bool {
    a.det < b.det || (a.det == b.det && a.indices < b.indices)
}

/// FastMCD with `MCD_STARTS` random elemental starts.
pub fn mcd(x: &DataMatrix, alpha: f64, rng: &mut RngStream) -> Result<ScatterEstimate> {
    let spec = ScatterSpec::mcd(alpha);
    mcd_with_spec(x, &spec, rng)
}

fn mcd_with_spec(x: &DataMatrix, spec: &ScatterSpec, rng: &mut RngStream) -> Result<ScatterEstimate> {
    let ScatterKind::Mcd { alpha } = spec.kind else {
        unreachable!("mcd_with_spec called with non-MCD spec");
    };
    let (n, p) = (x.nrows(), x.ncols());
    let h = (alpha * n as f64).ceil() as usize;
    if h <= p {
        return Err(Error::InsufficientSubsetSize { h, p });
    }
    if n <= p {
        return Err(Error::TooFewRows { needed: p + 1, got: n });
    }
    let values = x.values();

    if h >= n {
        // alpha = 1: no trimming, consistency factor 1.
        let (mean, cov, _) = subset_stats(values, &(0..n).collect::<Vec<_>>())
            .ok_or(Error::SingularScatter { eigenvalue: 0.0 })?;
        return Ok(ScatterEstimate {
            location: mean,
            scatter: SymMatrix::new(cov)?,
            class: RobustnessClass::III,
            converged: true,
            iterations: 0,
        });
    }

    // Elemental starts: (p+1)-subsets, each concentrated for two steps.
    let mut candidates: Vec<Subset> = Vec::new();
    for _ in 0..MCD_STARTS {
        let start = sample_without_replacement(n, p + 1, rng);
        let Some((mean, cov, _)) = subset_stats(values, &start) else {
            continue;
        };
        let Some(initial) = c_step(values, &mean, &cov, h) else {
            continue;
        };
        if let Some(sub) = run_c_steps(values, initial, h, Some(MCD_INITIAL_CSTEPS)) {
            candidates.push(sub);
        }
    }
    if candidates.is_empty() {
        return Err(Error::SingularScatter { eigenvalue: 0.0 });
    }
    candidates.sort_by(|a, b| {
        a.det
            .partial_cmp(&b.det)
            .expect("finite determinants")
            .then_with(|| a.indices.cmp(&b.indices))
    });
    candidates.truncate(MCD_KEEP);

    let mut best: Option<Subset> = None;
    let mut iterations = 0usize;
    for cand in candidates {
        if let Some(sub) = run_c_steps(values, cand.indices, h, None) {
            iterations += 1;
            if best.as_ref().is_none_or(|b| better(&sub, b)) {
                best = Some(sub);
            }
        }
    }
    let best = best.ok_or(Error::SingularScatter { eigenvalue: 0.0 })?;

    let factor = mcd_consistency_factor(alpha, p);
    Ok(ScatterEstimate {
        location: best.mean,
        scatter: SymMatrix::new(best.cov * factor)?,
        class: RobustnessClass::III,
        converged: true,
        iterations,
    })
}

/// Chi-square consistency factor alpha / P(chi2_{p+2} <= q_alpha) with
/// q_alpha the alpha-quantile of chi2_p.
pub fn mcd_consistency_factor(alpha: f64, p: usize) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let chi_p = ChiSquared::new(p as f64).expect("p >= 1");
    let chi_p2 = ChiSquared::new(p as f64 + 2.0).expect("p >= 1");
    let q = chi_p.inverse_cdf(alpha);
    alpha / chi_p2.cdf(q)
}

/// Exhaustive MCD over all h-subsets; test oracle for small n.
pub fn mcd_exhaustive(x: &DataMatrix, alpha: f64) -> Result<(Vec<usize>, ScatterEstimate)> {
    let (n, p) = (x.nrows(), x.ncols());
    let h = (alpha * n as f64).ceil() as usize;
    if h <= p {
        return Err(Error::InsufficientSubsetSize { h, p });
    }
    let values = x.values();
    let mut best: Option<Subset> = None;
    let mut indices: Vec<usize> = (0..h).collect();
    loop {
        if let Some((mean, cov, det)) = subset_stats(values, &indices) {
            let cand = Subset {
                indices: indices.clone(),
                det,
                mean,
                cov,
            };
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
        if !next_combination(&mut indices, n) {
            break;
        }
    }
    let best = best.ok_or(Error::SingularScatter { eigenvalue: 0.0 })?;
    let factor = mcd_consistency_factor(alpha.min(1.0), p);
    let est = ScatterEstimate {
        location: best.mean,
        scatter: SymMatrix::new(best.cov * factor)?,
        class: RobustnessClass::III,
        converged: true,
        iterations: 0,
    };
    Ok((best.indices, est))
}

fn next_combination(indices: &mut [usize], n: usize) -> bool {
    let k = indices.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if indices[i] < n - k + i {
            indices[i] += 1;
            for j in i + 1..k {
                indices[j] = indices[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn sample_without_replacement(n: usize, k: usize, rng: &mut RngStream) -> Vec<usize> {
    // Partial Fisher-Yates over the index range.
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Dispatches a spec to the matching estimator.
pub fn estimate(x: &DataMatrix, spec: &ScatterSpec, rng: &mut RngStream) -> Result<ScatterEstimate> {
    match spec.kind {
        ScatterKind::MeanCov => mean_cov(x),
        ScatterKind::Cov4 => cov4(x),
        ScatterKind::Tyler(loc) => {
            let location = match loc {
                TylerLocation::SpatialMedian => {
                    spatial_median(x.values(), spec.tol, spec.max_iter).point
                }
                TylerLocation::Hr => hr_estimate(x, spec)?.location,
            };
            tyler_shape(x, &location, spec)
        }
        ScatterKind::Hr => hr_estimate(x, spec),
        ScatterKind::Mcd { .. } => mcd_with_spec(x, spec, rng),
        ScatterKind::Identity => Ok(ScatterEstimate {
            location: column_means(x.values()),
            scatter: SymMatrix::identity(x.ncols()),
            class: RobustnessClass::Fixed,
            converged: true,
            iterations: 0,
        }),
    }
}
