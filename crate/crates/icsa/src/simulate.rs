//! Scenario generators and the replication grid for the privacy/utility
//! comparison of SA and ICSA.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::anonymize::{anonymize, AnonymizationRequest};
use crate::data::DataMatrix;
use crate::error::Result;
use crate::matrix::random_orthogonal;
use crate::metrics::{median_iqr, ols, ore, utility_distance};
use crate::rng::{cell_stream, RngStream};
use crate::scatter::ScatterSpec;

/// One generated dataset: features, clean and contaminated responses,
/// outlier indices and the true coefficient vector.
#[derive(Debug, Clone)]
pub struct ScenarioInstance {
    pub x: DMatrix<f64>,
    pub y_clean: DVector<f64>,
    pub y_contaminated: DVector<f64>,
    pub outliers: Vec<usize>,
    pub beta: DVector<f64>,
}

fn true_beta(p: usize) -> DVector<f64> {
    DVector::from_fn(p, |j, _| {
        let j1 = (j + 1) as f64;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sign / j1.sqrt()
    })
}

fn response(x: &DMatrix<f64>, beta: &DVector<f64>, rng: &mut RngStream) -> DVector<f64> {
    x * beta + DVector::from_fn(x.nrows(), |_, _| rng.sample(StandardNormal))
}

/// Independent features with variances p..1; the final observation's
/// response is shifted by kappa plus N(0, 0.4^2) noise.
pub fn gen_scenario1(n: usize, p: usize, kappa: f64, rng: &mut RngStream) -> ScenarioInstance {
    let x = DMatrix::from_fn(n, p, |_, j| {
        rng.sample::<f64, _>(StandardNormal) * ((p - j) as f64).sqrt()
    });
    let beta = true_beta(p);
    let y_clean = response(&x, &beta, rng);
    let mut y_contaminated = y_clean.clone();
    let delta: f64 = rng.sample::<f64, _>(StandardNormal) * 0.4;
    y_contaminated[n - 1] += kappa + delta;
    ScenarioInstance {
        x,
        y_clean,
        y_contaminated,
        outliers: vec![n - 1],
        beta,
    }
}

/// Correlated features from a randomly rotated decaying spectrum; a random
/// 10% subset of responses is shifted by kappa plus N(0, 0.4^2) noise.
pub fn gen_scenario2(n: usize, p: usize, kappa: f64, rng: &mut RngStream) -> ScenarioInstance {
    let q = random_orthogonal(p, rng).expect("p >= 1");
    let mut lambdas: Vec<f64> = (1..=p)
        .map(|j| (p - j + 1) as f64 / p as f64 + rng.random::<f64>() * 0.05)
        .collect();
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // X = Z Lambda^{1/2} Q' draws N(0, Q Lambda Q').
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let half = DMatrix::from_diagonal(&DVector::from_iterator(
        p,
        lambdas.iter().map(|l| l.sqrt()),
    ));
    let x = z * half * q.transpose();

    let beta = true_beta(p);
    let y_clean = response(&x, &beta, rng);
    let count = (0.1 * n as f64).ceil() as usize;
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    let mut outliers: Vec<usize> = pool[..count].to_vec();
    outliers.sort_unstable();

    let mut y_contaminated = y_clean.clone();
    for &i in &outliers {
        let delta: f64 = rng.sample::<f64, _>(StandardNormal) * 0.4;
        y_contaminated[i] += kappa + delta;
    }
    ScenarioInstance {
        x,
        y_clean,
        y_contaminated,
        outliers,
        beta,
    }
}

pub fn gen_scenario(
    scenario: u8,
    n: usize,
    p: usize,
    kappa: f64,
    rng: &mut RngStream,
) -> ScenarioInstance {
    match scenario {
        1 => gen_scenario1(n, p, kappa, rng),
        2 => gen_scenario2(n, p, kappa, rng),
        other => panic!("unknown scenario {other}"),
    }
}

/// Per-replication metrics.
#[derive(Debug, Clone, Copy)]
pub struct MetricsRecord {
    pub ore: f64,
    pub utility_distance: f64,
}

/// Stacks features and contaminated response into one joint matrix, the
/// unit both methods anonymize.
pub fn stack(instance: &ScenarioInstance) -> DataMatrix {
    let (n, p) = instance.x.shape();
    let mut joint = DMatrix::zeros(n, p + 1);
    joint.view_mut((0, 0), (n, p)).copy_from(&instance.x);
    joint.set_column(p, &instance.y_contaminated);
    DataMatrix::from_values(joint)
}

pub fn run_replication(
    scenario: u8,
    n: usize,
    p: usize,
    kappa: f64,
    method: &AnonymizationRequest,
    stream: &mut RngStream,
) -> Result<MetricsRecord> {
    run_replication_inner(scenario, n, p, kappa, method, stream, false)
}

/// `noop_permutation` replaces the latent permutation by the identity
/// (test hook: the anonymization becomes a round trip).
fn run_replication_inner(
    scenario: u8,
    n: usize,
    p: usize,
    kappa: f64,
    method: &AnonymizationRequest,
    stream: &mut RngStream,
    noop_permutation: bool,
) -> Result<MetricsRecord> {
    let instance = gen_scenario(scenario, n, p, kappa, stream);
    let joint = stack(&instance);

    let anonymized = if noop_permutation {
        let fitted = crate::anonymize::FittedAnonymizer::fit(&joint, method, stream)?;
        let scores = fitted.scores().clone();
        fitted.reconstruct(&scores)?
    } else {
        anonymize(&joint, method, stream)?
    };

    let ore_value = ore(&joint, &anonymized, &instance.outliers)?;

    let x_star = anonymized.values().view((0, 0), (n, p)).clone_owned();
    let y_star = anonymized.values().column(p).clone_owned();
    let beta_hat = ols(&x_star, &y_star)?;
    let utility = utility_distance(&instance.beta, &beta_hat)?;
    Ok(MetricsRecord {
        ore: ore_value,
        utility_distance: utility,
    })
}

/// The eight scatter pairings of the study plus plain SA, by CLI name.
pub fn method_by_name(name: &str) -> Option<AnonymizationRequest> {
    let req = match name {
        "sa" => AnonymizationRequest::sa(),
        "i-i" => AnonymizationRequest::icsa(ScatterSpec::mean_cov(), ScatterSpec::cov4()),
        "ii-i" => AnonymizationRequest::icsa(ScatterSpec::hr(), ScatterSpec::mean_cov()),
        "ii-ii" => AnonymizationRequest::icsa(ScatterSpec::hr(), ScatterSpec::tyler()),
        "iii50-i" => AnonymizationRequest::icsa(ScatterSpec::mcd(0.5), ScatterSpec::mean_cov()),
        "iii75-i" => AnonymizationRequest::icsa(ScatterSpec::mcd(0.75), ScatterSpec::mean_cov()),
        "iii50-ii" => AnonymizationRequest::icsa(ScatterSpec::mcd(0.5), ScatterSpec::hr()),
        "iii75-ii" => AnonymizationRequest::icsa(ScatterSpec::mcd(0.75), ScatterSpec::hr()),
        "iii-iii" => AnonymizationRequest::icsa(ScatterSpec::mcd(0.5), ScatterSpec::mcd(0.75)),
        _ => return None,
    };
    Some(req)
}

pub const METHOD_NAMES: [&str; 9] = [
    "sa", "i-i", "ii-i", "ii-ii", "iii50-i", "iii75-i", "iii50-ii", "iii75-ii", "iii-iii",
];

#[derive(Debug, Clone)]
pub struct GridConfig {
    pub scenario: u8,
    pub ns: Vec<usize>,
    pub ps: Vec<usize>,
    pub kappas: Vec<f64>,
    pub replications: usize,
    pub methods: Vec<String>,
    pub seed: u64,
}

/// One aggregated output row: medians and quartiles of a metric within a
/// grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub scenario: u8,
    pub n: usize,
    pub p: usize,
    pub kappa: f64,
    pub method: String,
    pub metric: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub failures: usize,
}

/// Raw per-replication results of one cell, for direct statistical tests.
pub struct CellResults {
    pub ores: Vec<f64>,
    pub utilities: Vec<f64>,
    pub failures: usize,
}

pub fn run_cell(
    scenario: u8,
    n: usize,
    p: usize,
    kappa: f64,
    method_index: usize,
    method: &AnonymizationRequest,
    replications: usize,
    seed: u64,
) -> CellResults {
    let records: Vec<Option<MetricsRecord>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let stream = cell_stream(scenario, n, p, kappa, method_index, rep);
            let mut rng = RngStream::new(seed, stream);
            run_replication(scenario, n, p, kappa, method, &mut rng).ok()
        })
        .collect();
    let failures = records.iter().filter(|r| r.is_none()).count();
    CellResults {
        ores: records.iter().flatten().map(|r| r.ore).collect(),
        utilities: records.iter().flatten().map(|r| r.utility_distance).collect(),
        failures,
    }
}

pub fn run_grid(cfg: &GridConfig) -> Result<Vec<GridRow>> {
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        for &p in &cfg.ps {
            for &kappa in &cfg.kappas {
                for (mi, name) in cfg.methods.iter().enumerate() {
                    let method = method_by_name(name).ok_or_else(|| {
                        crate::error::Error::SchemaError(format!("unknown method {name}"))
                    })?;
                    let cell =
                        run_cell(cfg.scenario, n, p, kappa, mi, &method, cfg.replications, cfg.seed);
                    for (metric, values) in
                        [("ore", &cell.ores), ("utility", &cell.utilities)]
                    {
                        let (median, q1, q3) = if values.is_empty() {
                            (f64::NAN, f64::NAN, f64::NAN)
                        } else {
                            median_iqr(values)
                        };
                        rows.push(GridRow {
                            scenario: cfg.scenario,
                            n,
                            p,
                            kappa,
                            method: name.clone(),
                            metric: metric.to_string(),
                            median,
                            q1,
                            q3,
                            failures: cell.failures,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn beta_matches_alternating_inverse_sqrt() {
        let beta = true_beta(3);
        assert_abs_diff_eq!(beta[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(beta[1], -1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(beta[2], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn scenario1_column_variances() {
        let mut rng = RngStream::new(60, 0);
        let inst = gen_scenario1(10_000, 3, 4.0, &mut rng);
        for j in 0..3 {
            let col = inst.x.column(j);
            let mean = col.sum() / 10_000.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9_999.0;
            let expected = (3 - j) as f64;
            // 3 SEs of the variance of a Gaussian sample.
            let se = expected * (2.0 / 10_000f64).sqrt();
            assert!((var - expected).abs() < 3.0 * se, "col {j}: {var} vs {expected}");
        }
        assert_eq!(inst.outliers, vec![9_999]);
    }

    #[test]
    fn scenario1_zero_kappa_shift_is_small_noise() {
        let mut shifts = Vec::new();
        for s in 0..200 {
            let mut rng = RngStream::new(s, 0);
            let inst = gen_scenario1(20, 2, 0.0, &mut rng);
            shifts.push(inst.y_contaminated[19] - inst.y_clean[19]);
        }
        let mean = shifts.iter().sum::<f64>() / 200.0;
        let var = shifts.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 199.0;
        assert!(mean.abs() < 0.12, "mean shift {mean}");
        assert!((var.sqrt() - 0.4).abs() < 0.1, "sd {}", var.sqrt());
    }

    #[test]
    fn scenario2_eigenvalue_intervals_and_outlier_count() {
        let mut rng = RngStream::new(61, 0);
        let inst = gen_scenario2(20, 4, 2.0, &mut rng);
        assert_eq!(inst.outliers.len(), 2);

        // Regenerate the covariance deterministically to inspect Lambda.
        let mut rng = RngStream::new(61, 0);
        let _q = random_orthogonal(4, &mut rng).unwrap();
        let mut lambdas: Vec<f64> = (1..=4)
            .map(|j| (4 - j + 1) as f64 / 4.0 + rng.random::<f64>() * 0.05)
            .collect();
        lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (rank, l) in lambdas.iter().enumerate() {
            let base = (4 - rank) as f64 / 4.0;
            assert!(*l >= base && *l <= base + 0.05 + 1e-12, "lambda {l} vs base {base}");
        }
    }

    #[test]
    fn scenario2_contamination_restricted_to_outliers() {
        let mut rng = RngStream::new(62, 0);
        let inst = gen_scenario2(40, 3, 8.0, &mut rng);
        for i in 0..40 {
            let diff = inst.y_contaminated[i] - inst.y_clean[i];
            if inst.outliers.contains(&i) {
                assert!(diff != 0.0);
            } else {
                assert_eq!(diff, 0.0);
            }
        }
    }

    #[test]
    fn replication_with_identity_permutation_is_noop() {
        let mut stream = RngStream::new(63, 0);
        let rec = run_replication_inner(
            1,
            40,
            3,
            16.0,
            &AnonymizationRequest::sa(),
            &mut stream,
            true,
        )
        .unwrap();
        assert!(rec.ore < 1e-12, "ORE {}", rec.ore);

        // Utility equals the clean OLS error of the same instance.
        let mut stream = RngStream::new(63, 0);
        let inst = gen_scenario1(40, 3, 16.0, &mut stream);
        let beta_hat = ols(&inst.x, &inst.y_contaminated).unwrap();
        let expected = utility_distance(&inst.beta, &beta_hat).unwrap();
        assert_abs_diff_eq!(rec.utility_distance, expected, epsilon = 1e-6);
    }

    #[test]
    fn replication_deterministic() {
        let method = AnonymizationRequest::sa();
        let a = run_replication(1, 30, 3, 4.0, &method, &mut RngStream::new(1, 5)).unwrap();
        let b = run_replication(1, 30, 3, 4.0, &method, &mut RngStream::new(1, 5)).unwrap();
        assert_eq!(a.ore, b.ore);
        assert_eq!(a.utility_distance, b.utility_distance);
    }

    #[test]
    fn grid_of_one_cell() {
        let cfg = GridConfig {
            scenario: 1,
            ns: vec![20],
            ps: vec![2],
            kappas: vec![4.0],
            replications: 1,
            methods: vec!["sa".into()],
            seed: 1,
        };
        let rows = run_grid(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].metric, "ore");
        assert_eq!(rows[1].metric, "utility");
    }

    #[test]
    fn grid_schema_stable_under_more_replications() {
        let mut cfg = GridConfig {
            scenario: 1,
            ns: vec![20],
            ps: vec![2],
            kappas: vec![2.0],
            replications: 5,
            methods: vec!["sa".into(), "i-i".into()],
            seed: 2,
        };
        let rows5 = run_grid(&cfg).unwrap();
        cfg.replications = 10;
        let rows10 = run_grid(&cfg).unwrap();
        assert_eq!(rows5.len(), rows10.len());
        for (a, b) in rows5.iter().zip(&rows10) {
            assert_eq!((a.method.clone(), a.metric.clone()), (b.method.clone(), b.metric.clone()));
        }
    }

    #[test]
    fn grid_bit_identical_across_runs() {
        let cfg = GridConfig {
            scenario: 2,
            ns: vec![20],
            ps: vec![2],
            kappas: vec![4.0],
            replications: 8,
            methods: vec!["sa".into()],
            seed: 77,
        };
        let a = run_grid(&cfg).unwrap();
        let b = run_grid(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
