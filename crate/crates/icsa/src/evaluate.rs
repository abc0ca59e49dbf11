//! Real-data evaluation: lasso-based selection stability and privacy
//! efficiency ratios between an ICSA scatter pair and SA.

use rayon::prelude::*;

use crate::anonymize::{anonymize, AnonymizationRequest};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::metrics::{
    lasso_cv, ore, rpe, rpe_ratio_ci, selection_metrics, utility_distance, LassoFit, UtilityKind,
};
use crate::rng::RngStream;

pub const N_PREDICTORS: usize = 20;
pub const N_RESPONSES: usize = 10;
pub const N_ATTRIBUTES: usize = N_PREDICTORS + N_RESPONSES;

#[derive(Debug, Clone)]
pub struct EvaluateConfig {
    pub method: AnonymizationRequest,
    pub runs: usize,
    pub bootstrap: usize,
    pub folds: usize,
    pub seed: u64,
}

impl EvaluateConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            method: AnonymizationRequest::icsa(
                crate::scatter::ScatterSpec::mcd(0.5),
                crate::scatter::ScatterSpec::mcd(0.75),
            ),
            runs: 2000,
            bootstrap: 2000,
            folds: 10,
            seed,
        }
    }
}

/// One RPE ratio with its bootstrap interval.
#[derive(Debug, Clone)]
pub struct RatioRow {
    pub variable: String,
    pub metric: &'static str,
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct EvaluateReport {
    pub rows: Vec<RatioRow>,
    pub runs: usize,
    pub failed_runs: [usize; 2],
    /// RPE samples dropped because the utility loss was exactly zero.
    pub infinite_rpe: [usize; 2],
}

impl EvaluateReport {
    pub fn overall(&self, metric: &str) -> Option<&RatioRow> {
        self.rows
            .iter()
            .find(|r| r.variable == "Overall" && r.metric == metric)
    }

    /// Count of per-variable rows (Overall excluded) with ratio above 1.
    pub fn per_variable_wins(&self) -> (usize, usize) {
        let per_var: Vec<&RatioRow> = self
            .rows
            .iter()
            .filter(|r| r.variable != "Overall")
            .collect();
        let wins = per_var.iter().filter(|r| r.ratio > 1.0).count();
        (wins, per_var.len())
    }
}

struct RunOutcome {
    /// RPE samples per response variable per utility kind.
    samples: Vec<Vec<f64>>,
    infinite: usize,
}

fn baseline_fits(data: &DataMatrix, cfg: &EvaluateConfig) -> Result<Vec<LassoFit>> {
    let x = data
        .values()
        .view((0, 0), (data.nrows(), N_PREDICTORS))
        .clone_owned();
    (0..N_RESPONSES)
        .map(|r| {
            let y = data.values().column(N_PREDICTORS + r).clone_owned();
            let mut rng = RngStream::new(cfg.seed, crate::rng::mix(0xba5e, r as u64));
            lasso_cv(&x, &y, cfg.folds, &mut rng)
        })
        .collect()
}

fn evaluate_run(
    data: &DataMatrix,
    outliers: &[usize],
    baselines: &[LassoFit],
    method: &AnonymizationRequest,
    cfg: &EvaluateConfig,
    stream: u64,
) -> Result<RunOutcome> {
    let mut rng = RngStream::new(cfg.seed, stream);
    let anon = anonymize(data, method, &mut rng)?;
    let ore_value = ore(data, &anon, outliers)?;

    let xa = anon
        .values()
        .view((0, 0), (anon.nrows(), N_PREDICTORS))
        .clone_owned();
    let mut samples = vec![Vec::new(); N_RESPONSES * UtilityKind::ALL.len()];
    let mut infinite = 0usize;
    for r in 0..N_RESPONSES {
        let y = anon.values().column(N_PREDICTORS + r).clone_owned();
        let mut cv_rng = RngStream::new(cfg.seed, crate::rng::mix(stream, r as u64 + 1));
        let fit = lasso_cv(&xa, &y, cfg.folds, &mut cv_rng)?;
        let distance = utility_distance(&baselines[r].coefficients, &fit.coefficients)?;
        let sel = selection_metrics(&baselines[r].selected, &fit.selected, N_PREDICTORS);

        for (k, kind) in UtilityKind::ALL.iter().enumerate() {
            let utility = match kind {
                UtilityKind::Distance => distance,
                UtilityKind::Recall => sel.recall,
                UtilityKind::Fpr => sel.fpr,
                UtilityKind::Precision => sel.precision,
                UtilityKind::Jaccard => sel.jaccard,
            };
            match rpe(ore_value, utility, *kind) {
                Ok(v) => samples[r * UtilityKind::ALL.len() + k].push(v),
                Err(Error::InfiniteEfficiency) => infinite += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(RunOutcome { samples, infinite })
}

fn collect_method(
    data: &DataMatrix,
    outliers: &[usize],
    baselines: &[LassoFit],
    method: &AnonymizationRequest,
    method_tag: u64,
    cfg: &EvaluateConfig,
) -> (Vec<Vec<f64>>, usize, usize) {
    let outcomes: Vec<Option<RunOutcome>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let stream = crate::rng::mix(method_tag, run as u64);
            evaluate_run(data, outliers, baselines, method, cfg, stream).ok()
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    let mut samples = vec![Vec::new(); N_RESPONSES * UtilityKind::ALL.len()];
    let mut infinite = 0usize;
    for outcome in outcomes.into_iter().flatten() {
        infinite += outcome.infinite;
        for (slot, values) in samples.iter_mut().zip(outcome.samples) {
            slot.extend(values);
        }
    }
    (samples, failed, infinite)
}

/// Runs the full comparison: `cfg.runs` anonymizations per method, one
/// lasso refit per response variable per run, RPE ratios with bootstrap
/// intervals per variable and pooled overall.
pub fn evaluate_real(
    data: &DataMatrix,
    outliers: &[usize],
    cfg: &EvaluateConfig,
) -> Result<EvaluateReport> {
    if data.ncols() != N_ATTRIBUTES {
        return Err(Error::SchemaError(format!(
            "expected {N_ATTRIBUTES} attribute columns, got {}",
            data.ncols()
        )));
    }
    if outliers.is_empty() {
        return Err(Error::EmptyOutlierSet);
    }

    let baselines = baseline_fits(data, cfg)?;
    let (icsa_samples, icsa_failed, icsa_inf) =
        collect_method(data, outliers, &baselines, &cfg.method, 0x1c5a, cfg);
    let sa = AnonymizationRequest::sa();
    let (sa_samples, sa_failed, sa_inf) =
        collect_method(data, outliers, &baselines, &sa, 0x5a, cfg);

    let response_names: Vec<String> = (0..N_RESPONSES)
        .map(|r| data.names()[N_PREDICTORS + r].clone())
        .collect();

    let mut rows = Vec::new();
    let mut ci_rng = RngStream::new(cfg.seed, 0xc1);
    // Metrics whose every sample was dropped (utility loss exactly zero on
    // all runs) get NaN rows rather than failing the whole report.
    let ci_or_nan = |a: &[f64], b: &[f64], rng: &mut RngStream| -> Result<(f64, f64, f64)> {
        match rpe_ratio_ci(a, b, cfg.bootstrap, rng) {
            Ok(v) => Ok(v),
            Err(Error::ConditionNotMet(_)) => Ok((f64::NAN, f64::NAN, f64::NAN)),
            Err(e) => Err(e),
        }
    };
    for (r, name) in response_names.iter().enumerate() {
        for (k, kind) in UtilityKind::ALL.iter().enumerate() {
            let idx = r * UtilityKind::ALL.len() + k;
            let (ratio, lower, upper) =
                ci_or_nan(&icsa_samples[idx], &sa_samples[idx], &mut ci_rng)?;
            rows.push(RatioRow {
                variable: name.clone(),
                metric: kind.label(),
                ratio,
                lower,
                upper,
            });
        }
    }
    // Overall: pool the per-variable samples per metric.
    for (k, kind) in UtilityKind::ALL.iter().enumerate() {
        let pool = |samples: &[Vec<f64>]| -> Vec<f64> {
            (0..N_RESPONSES)
                .flat_map(|r| samples[r * UtilityKind::ALL.len() + k].iter().copied())
                .collect()
        };
        let (ratio, lower, upper) =
            ci_or_nan(&pool(&icsa_samples), &pool(&sa_samples), &mut ci_rng)?;
        rows.push(RatioRow {
            variable: "Overall".into(),
            metric: kind.label(),
            ratio,
            lower,
            upper,
        });
    }

    Ok(EvaluateReport {
        rows,
        runs: cfg.runs,
        failed_runs: [icsa_failed, sa_failed],
        infinite_rpe: [icsa_inf, sa_inf],
    })
}

pub fn write_report_csv(path: &std::path::Path, report: &EvaluateReport) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["variable", "metric", "ratio", "lower", "upper"])?;
    for row in &report.rows {
        writer.write_record([
            row.variable.clone(),
            row.metric.to_string(),
            format!("{:?}", row.ratio),
            format!("{:?}", row.lower),
            format!("{:?}", row.upper),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
