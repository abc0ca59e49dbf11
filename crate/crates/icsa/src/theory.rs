//! Executable checks of the finite-sample privacy bound for SA and the two
//! variance/direction lemmas behind it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::anonymize::{AnonymizationRequest, FittedAnonymizer};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::matrix::sym_eigen;
use crate::rng::RngStream;

/// n bounded inliers plus a single outlier of norm H.
#[derive(Debug, Clone)]
pub struct OutlierConstruction {
    pub inliers: DMatrix<f64>,
    pub outlier: DVector<f64>,
    pub inlier_bound: f64,
}

impl OutlierConstruction {
    /// Inliers uniform on the M-ball, outlier of norm H along the first
    /// coordinate axis.
    pub fn uniform_ball(n: usize, p: usize, m: f64, h: f64, rng: &mut RngStream) -> Self {
        let mut inliers = DMatrix::zeros(n, p);
        for i in 0..n {
            // Direction uniform on the sphere, radius r = M * u^{1/p}.
            let dir = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = m * rng.random::<f64>().powf(1.0 / p as f64);
            let scaled = &dir * (r / dir.norm());
            inliers.row_mut(i).copy_from(&scaled.transpose());
        }
        let mut outlier = DVector::zeros(p);
        outlier[0] = h;
        Self {
            inliers,
            outlier,
            inlier_bound: m,
        }
    }

    pub fn n(&self) -> usize {
        self.inliers.nrows()
    }

    pub fn p(&self) -> usize {
        self.inliers.ncols()
    }

    pub fn outlier_norm(&self) -> f64 {
        self.outlier.norm()
    }

    /// The (n+1) x p matrix the anonymizer sees; the outlier is the last row.
    pub fn stacked(&self) -> DataMatrix {
        let (n, p) = self.inliers.shape();
        let mut joint = DMatrix::zeros(n + 1, p);
        joint.view_mut((0, 0), (n, p)).copy_from(&self.inliers);
        joint.row_mut(n).copy_from(&self.outlier.transpose());
        DataMatrix::from_values(joint)
    }
}

/// Empirical versus analytic bound over a batch of SA draws.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub empirical_max: f64,
    pub bound: f64,
    pub trials: usize,
    pub pass: bool,
}

/// Explicit finite-sample bound on the normalized squared distance from the
/// outlier to its nearest anonymized row:
/// 2 (p - 1) M {(n - 4) M + 4 H} / H^2, valid for H > (n + 2) M.
pub fn theorem_bound(n: usize, p: usize, m: f64, h: f64) -> Result<f64> {
    if h <= (n as f64 + 2.0) * m {
        return Err(Error::ConditionNotMet(format!(
            "H = {h} must exceed (n + 2) M = {}",
            (n as f64 + 2.0) * m
        )));
    }
    Ok(2.0 * (p as f64 - 1.0) * m * ((n as f64 - 4.0) * m + 4.0 * h) / (h * h))
}

/// Normalized squared distance from the outlier to the nearest row of one
/// anonymized dataset.
fn min_ratio(data: &OutlierConstruction, anonymized: &DataMatrix) -> f64 {
    let target = &data.outlier;
    let norm2 = target.norm_squared();
    let a = anonymized.values();
    let mut best = f64::INFINITY;
    for i in 0..a.nrows() {
        let d = (a.row(i).transpose() - target).norm_squared();
        if d < best {
            best = d;
        }
    }
    best / norm2
}

/// Runs `trials` independent SA draws and reports the worst (largest)
/// min-ratio against the analytic bound.
pub fn sa_min_ratio(
    data: &OutlierConstruction,
    trials: usize,
    rng: &mut RngStream,
) -> Result<BoundReport> {
    let joint = data.stacked();
    let fitted = FittedAnonymizer::fit(&joint, &AnonymizationRequest::sa(), rng)?;

    let streams: Vec<RngStream> = (0..trials).map(|t| rng.substream(t as u64)).collect();
    let empirical_max = streams
        .into_par_iter()
        .map(|mut s| {
            let anon = fitted.draw(&mut s).expect("SA draw cannot fail after fit");
            min_ratio(data, &anon)
        })
        .reduce(|| 0.0, f64::max);

    let bound = theorem_bound(data.n(), data.p(), data.inlier_bound, data.outlier_norm())?;
    Ok(BoundReport {
        empirical_max,
        bound,
        trials,
        pass: empirical_max <= bound,
    })
}

/// Exact maximum of the min-ratio over all spectral anonymizations, by
/// enumerating every permutation pair of the two left-singular-vector
/// columns. Only feasible for n + 1 <= 7 and p = 2.
pub fn sa_min_ratio_exhaustive(data: &OutlierConstruction) -> Result<f64> {
    let n1 = data.n() + 1;
    let p = data.p();
    if p != 2 || n1 > 7 {
        return Err(Error::ConditionNotMet(
            "exhaustive enumeration needs p = 2 and n + 1 <= 7".into(),
        ));
    }
    let joint = data.stacked();
    let mean = crate::matrix::column_means(joint.values());
    let centered = crate::matrix::center_rows(joint.values(), &mean);

    // Thin SVD of the centered data: columns of (U D) are the scaled
    // left singular vectors the permutations act on.
    let svd = centered.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let d = &svd.singular_values;
    let col_a: Vec<f64> = (0..n1).map(|i| u[(i, 0)] * d[0]).collect();
    let col_b: Vec<f64> = (0..n1).map(|i| u[(i, 1)] * d[1]).collect();
    // Distances are mean-invariant, so targets are the outlier's scores.
    let t_a = col_a[n1 - 1];
    let t_b = col_b[n1 - 1];

    let perms = permutations(n1);
    let h2 = data.outlier.norm_squared();
    let max = perms
        .par_iter()
        .map(|pa| {
            let a: Vec<f64> = pa.iter().map(|&k| col_a[k]).collect();
            let mut local = 0.0f64;
            let mut b = vec![0.0f64; n1];
            let mut idx: Vec<usize> = (0..n1).collect();
            // Heap's algorithm over the second column.
            let mut c = vec![0usize; n1];
            loop {
                for i in 0..n1 {
                    b[i] = col_b[idx[i]];
                }
                let mut best = f64::INFINITY;
                for i in 0..n1 {
                    let da = t_a - a[i];
                    let db = t_b - b[i];
                    let dist = da * da + db * db;
                    if dist < best {
                        best = dist;
                    }
                }
                if best > local {
                    local = best;
                }
                // Advance Heap's algorithm.
                let mut i = 1usize;
                loop {
                    if i >= n1 {
                        return local;
                    }
                    if c[i] < i {
                        if i % 2 == 0 {
                            idx.swap(0, i);
                        } else {
                            idx.swap(c[i], i);
                        }
                        c[i] += 1;
                        break;
                    }
                    c[i] = 0;
                    i += 1;
                }
            }
        })
        .reduce(|| 0.0, f64::max);
    Ok(max / h2)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    heap_permute(&mut idx, n, &mut out);
    out
}

fn heap_permute(idx: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(idx.clone());
        return;
    }
    for i in 0..k {
        heap_permute(idx, k - 1, out);
        if k % 2 == 0 {
            idx.swap(i, k - 1);
        } else {
            idx.swap(0, k - 1);
        }
    }
}

/// Closed-form extremes of the sample variance of n points in [-M, M]
/// joined by a fixed point at H: (max when H > nM, universal upper bound,
/// min).
pub fn lemma1_extremes(n: usize, m: f64, h: f64) -> (f64, f64, f64) {
    let nf = n as f64;
    let max_var = nf * (h + m).powi(2) / (nf + 1.0).powi(2);
    let upper = (nf * m * m + h * h) / (nf + 1.0);
    let min_var = nf * (h - m).powi(2) / (nf + 1.0).powi(2);
    (max_var, upper, min_var)
}

fn sample_variance_with_fixed(xs: &[f64], h: f64) -> f64 {
    let n1 = xs.len() as f64 + 1.0;
    let sum: f64 = xs.iter().sum::<f64>() + h;
    let sum2: f64 = xs.iter().map(|v| v * v).sum::<f64>() + h * h;
    sum2 / n1 - (sum / n1).powi(2)
}

/// Brute-force extremes of the same variance: the maximum over the 2^n
/// vertex sign patterns (the objective is convex, so the max sits at a
/// vertex) and the minimum over a uniform grid on [-M, M]^n.
pub fn lemma1_oracle(n: usize, m: f64, h: f64, grid_points: usize) -> (f64, f64) {
    assert!(n <= 4, "oracle cost grows as grid^n");
    assert!(grid_points >= 21);

    let mut max_var = f64::NEG_INFINITY;
    for mask in 0..(1u32 << n) {
        let xs: Vec<f64> = (0..n)
            .map(|i| if mask & (1 << i) != 0 { m } else { -m })
            .collect();
        max_var = max_var.max(sample_variance_with_fixed(&xs, h));
    }

    let mut min_var = f64::INFINITY;
    let mut idx = vec![0usize; n];
    let coord = |k: usize| -m + 2.0 * m * k as f64 / (grid_points - 1) as f64;
    loop {
        let xs: Vec<f64> = idx.iter().map(|&k| coord(k)).collect();
        min_var = min_var.min(sample_variance_with_fixed(&xs, h));
        let mut i = 0;
        loop {
            if i == n {
                return (max_var, min_var);
            }
            idx[i] += 1;
            if idx[i] < grid_points {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Checks the leading-principal-component alignment: for H > (n + 2) M the
/// cosine between the outlier and the first PC of the full sample is at
/// least 1 - 2M/H. Returns the observed cosine.
pub fn lemma2_check(data: &OutlierConstruction) -> Result<(bool, f64)> {
    let n = data.n();
    let m = data.inlier_bound;
    let h = data.outlier_norm();
    if h <= (n as f64 + 2.0) * m {
        return Err(Error::ConditionNotMet(format!(
            "H = {h} must exceed (n + 2) M = {}",
            (n as f64 + 2.0) * m
        )));
    }
    let joint = data.stacked();
    let mean = crate::matrix::column_means(joint.values());
    let centered = crate::matrix::center_rows(joint.values(), &mean);
    let cov = crate::matrix::SymMatrix::new(
        centered.transpose() * &centered / (joint.nrows() as f64),
    )?;
    let eig = sym_eigen(&cov)?;
    let u = eig.vectors.column(0);
    let cosine = (data.outlier.dot(&u) / h).abs();
    Ok((cosine >= 1.0 - 2.0 * m / h, cosine))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bound_hand_value() {
        let b = theorem_bound(20, 4, 1.0, 1000.0).unwrap();
        assert_abs_diff_eq!(b, 0.024096, epsilon = 1e-12);
    }

    #[test]
    fn bound_univariate_is_zero() {
        assert_eq!(theorem_bound(5, 1, 1.0, 100.0).unwrap(), 0.0);
    }

    #[test]
    fn bound_decays_like_inverse_h() {
        let b1 = theorem_bound(20, 4, 1.0, 1e6).unwrap();
        let b2 = theorem_bound(20, 4, 1.0, 2e6).unwrap();
        // Asymptotically 8(p-1)M/H: doubling H roughly halves the bound.
        assert!((b1 / b2 - 2.0).abs() < 0.01);
        assert!(theorem_bound(20, 4, 1.0, 1e9).unwrap() < 1e-7);
    }

    #[test]
    fn bound_requires_lemma_condition() {
        assert!(matches!(
            theorem_bound(20, 4, 1.0, 21.9),
            Err(Error::ConditionNotMet(_))
        ));
    }

    #[test]
    fn identity_draw_has_zero_ratio() {
        let mut rng = RngStream::new(70, 0);
        let data = OutlierConstruction::uniform_ball(10, 3, 1.0, 1e4, &mut rng);
        let joint = data.stacked();
        let fitted = FittedAnonymizer::fit(&joint, &AnonymizationRequest::sa(), &mut rng).unwrap();
        let back = fitted.reconstruct(fitted.scores()).unwrap();
        assert!(min_ratio(&data, &back) < 1e-16);
    }

    #[test]
    fn sampled_maxima_stay_below_bound() {
        let mut rng = RngStream::new(71, 0);
        let data = OutlierConstruction::uniform_ball(20, 4, 1.0, 1e3, &mut rng);
        let report = sa_min_ratio(&data, 200, &mut rng).unwrap();
        assert!(report.pass, "max {} vs bound {}", report.empirical_max, report.bound);
        assert!(report.empirical_max > 0.0);
    }

    #[test]
    fn exhaustive_max_below_bound_at_tiny_n() {
        let mut rng = RngStream::new(72, 0);
        // H > (n + 2) M = 8.
        let data = OutlierConstruction::uniform_ball(6, 2, 1.0, 100.0, &mut rng);
        let exact = sa_min_ratio_exhaustive(&data).unwrap();
        let bound = theorem_bound(6, 2, 1.0, 100.0).unwrap();
        assert!(exact <= bound, "exhaustive {exact} vs bound {bound}");

        // Sampling can only underestimate the exhaustive maximum.
        let report = sa_min_ratio(&data, 500, &mut rng).unwrap();
        assert!(report.empirical_max <= exact + 1e-12);
    }

    #[test]
    fn exhaustive_rejects_large_instances() {
        let mut rng = RngStream::new(73, 0);
        let data = OutlierConstruction::uniform_ball(10, 2, 1.0, 1e3, &mut rng);
        assert!(sa_min_ratio_exhaustive(&data).is_err());
    }

    #[test]
    fn lemma1_formulas_hand_values() {
        let (max_var, upper, min_var) = lemma1_extremes(2, 1.0, 10.0);
        assert_abs_diff_eq!(max_var, 2.0 * 121.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(min_var, 2.0 * 81.0 / 9.0, epsilon = 1e-12);
        assert!(upper >= max_var);
    }

    #[test]
    fn lemma1_degenerate_inliers() {
        let (max_var, _, min_var) = lemma1_extremes(3, 0.0, 5.0);
        assert_abs_diff_eq!(max_var, min_var, epsilon = 1e-15);
        assert_abs_diff_eq!(max_var, 3.0 * 25.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn lemma1_oracle_agrees_with_formulas() {
        let (max_var, upper, min_var) = lemma1_extremes(2, 1.0, 10.0);
        let (oracle_max, oracle_min) = lemma1_oracle(2, 1.0, 10.0, 41);
        assert_abs_diff_eq!(oracle_max, max_var, epsilon = 1e-9);
        // Grid min is within grid resolution of the closed form.
        assert!((oracle_min - min_var).abs() < 0.05);
        assert!(oracle_max <= upper + 1e-12);
    }

    #[test]
    fn lemma2_zero_inliers_align_perfectly() {
        let data = OutlierConstruction {
            inliers: DMatrix::zeros(5, 3),
            outlier: DVector::from_column_slice(&[10.0, 0.0, 0.0]),
            inlier_bound: 0.1,
        };
        let (ok, cosine) = lemma2_check(&data).unwrap();
        assert!(ok);
        assert_abs_diff_eq!(cosine, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn lemma2_randomized_and_boundary() {
        for seed in 0..100 {
            let mut rng = RngStream::new(seed, 0);
            let n = 8;
            // Comfortably inside, and just above, the condition region.
            for h in [100.0 * (n as f64 + 2.0), (n as f64 + 2.0) * 1.01] {
                let data = OutlierConstruction::uniform_ball(n, 3, 1.0, h, &mut rng);
                let (ok, cosine) = lemma2_check(&data).unwrap();
                assert!(ok, "seed {seed} H {h}: cosine {cosine}");
            }
        }
    }
}
