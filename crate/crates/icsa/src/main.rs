//! Command-line front end: anonymize datasets, run simulation grids,
//! evaluate the real-data pipeline, and check the SA privacy bound.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use icsa::anonymize::AnonymizationRequest;
use icsa::error::Error;
use icsa::evaluate::{evaluate_real, write_report_csv, EvaluateConfig};
use icsa::io::{load_csv, write_data_csv, write_grid_csv, write_theorem_csv, SchemaHints};
use icsa::scatter::ScatterSpec;
use icsa::simulate::{method_by_name, run_grid, GridConfig, METHOD_NAMES};
use icsa::theory::{sa_min_ratio, OutlierConstruction};
use icsa::RngStream;

#[derive(Parser)]
#[command(name = "icsa", version, about = "Outlier-robust latent-space data anonymization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Anonymize a CSV dataset with SA or an ICSA scatter pairing.
    Anonymize(AnonymizeArgs),
    /// Run simulation scenarios over a replication grid.
    Simulate(SimulateArgs),
    /// Compare ICSA and SA on a real dataset via lasso selection stability.
    Evaluate(EvaluateArgs),
    /// Check the SA outlier-replication bound empirically.
    CheckTheorem(CheckTheoremArgs),
}

/// Common plumbing: a flat key=value config file supplies defaults; flags
/// given on the command line win.
#[derive(Args, Default)]
struct Common {
    /// Flat key=value config file mirroring the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; identical seeds give bit-identical outputs.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct AnonymizeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Named pairing (sa, i-i, ii-i, ii-ii, iii50-i, iii75-i, iii50-ii,
    /// iii75-ii, iii-iii); overridden by --spec1/--spec2.
    #[arg(long)]
    method: Option<String>,
    /// Explicit first scatter (identity, cov, cov4, tyler, tyler-hr, hr,
    /// mcd50, mcd75, mcd:<alpha>).
    #[arg(long)]
    spec1: Option<String>,
    /// Explicit second scatter, same names as --spec1.
    #[arg(long)]
    spec2: Option<String>,
    /// Comma-separated columns forced to binary.
    #[arg(long)]
    binary: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// 1 or 2.
    #[arg(long)]
    scenario: Option<u8>,
    /// Comma-separated sample sizes.
    #[arg(long)]
    n: Option<String>,
    /// Comma-separated feature counts (data dimension is p + 1).
    #[arg(long)]
    p: Option<String>,
    /// Comma-separated outlier severities.
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated method names; "all" expands to every pairing.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Run the full study grid (n in {20,40,120,240,480}, p+1 in
    /// {4,8,16,32}, kappa in {0,2,4,8,16}, 1000 replications, all methods).
    #[arg(long)]
    full_grid: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// ICSA pairing compared against SA.
    #[arg(long)]
    method: Option<String>,
    /// Anonymization draws per method.
    #[arg(long)]
    runs: Option<usize>,
    /// Bootstrap resamples for the ratio intervals.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Header of the 0/1 outlier flag column.
    #[arg(long)]
    outlier_column: Option<String>,
}

#[derive(Args)]
struct CheckTheoremArgs {
    #[command(flatten)]
    common: Common,
    /// Inlier count.
    #[arg(long)]
    n: Option<usize>,
    /// Dimension.
    #[arg(long)]
    p: Option<usize>,
    /// Inlier norm bound.
    #[arg(long, short = 'M')]
    m: Option<f64>,
    /// Comma-separated outlier norms.
    #[arg(long, short = 'H')]
    h: Option<String>,
    /// SA draws per outlier norm.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Anonymize(args) => run_anonymize(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::CheckTheorem(args) => run_check_theorem(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 2 for validation problems, 3 for numerical failures.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::SingularScatter { .. }
        | Error::NotConverged { .. }
        | Error::DegenerateRow { .. }
        | Error::SingularDesign
        | Error::DegenerateResponse
        | Error::UndefinedRatio
        | Error::InfiniteEfficiency
        | Error::UndefinedNormalization { .. }
        | Error::InvalidMatrix => 3,
        Error::IcsFit { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn validation(msg: String) -> Error {
    Error::SchemaError(msg)
}

type ConfigMap = HashMap<String, String>;

fn load_config(path: Option<&Path>) -> Result<ConfigMap, Error> {
    let mut map = HashMap::new();
    let Some(path) = path else {
        return Ok(map);
    };
    let text = std::fs::read_to_string(path)?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(validation(format!(
                "config line {}: expected key=value, got {line:?}",
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Flag value if given, else the config entry, else the default.
fn resolve<T: FromStr + Clone>(
    flag: Option<T>,
    config: &ConfigMap,
    key: &str,
    default: Option<T>,
) -> Result<T, Error> {
    if let Some(v) = flag {
        return Ok(v);
    }
    if let Some(raw) = config.get(key) {
        return raw
            .parse::<T>()
            .map_err(|_| validation(format!("config key {key}: cannot parse {raw:?}")));
    }
    default.ok_or_else(|| validation(format!("missing required option --{key}")))
}

fn parse_list<T: FromStr>(raw: &str, what: &str) -> Result<Vec<T>, Error> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| validation(format!("invalid {what} entry {s:?}")))
        })
        .collect()
}

fn parse_scatter_spec(name: &str) -> Result<ScatterSpec, Error> {
    let spec = match name {
        "identity" => ScatterSpec::identity(),
        "cov" => ScatterSpec::mean_cov(),
        "cov4" => ScatterSpec::cov4(),
        "tyler" => ScatterSpec::tyler(),
        "tyler-hr" => ScatterSpec::tyler_with_hr_location(),
        "hr" => ScatterSpec::hr(),
        "mcd50" => ScatterSpec::mcd(0.5),
        "mcd75" => ScatterSpec::mcd(0.75),
        other => {
            if let Some(alpha) = other.strip_prefix("mcd:") {
                let alpha: f64 = alpha
                    .parse()
                    .map_err(|_| validation(format!("invalid MCD fraction {alpha:?}")))?;
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(validation(format!("MCD fraction {alpha} out of [0, 1]")));
                }
                ScatterSpec::mcd(alpha)
            } else {
                return Err(validation(format!("unknown scatter {other:?}")));
            }
        }
    };
    Ok(spec)
}

fn resolve_request(
    method: Option<String>,
    spec1: Option<String>,
    spec2: Option<String>,
    config: &ConfigMap,
) -> Result<AnonymizationRequest, Error> {
    let spec1 = resolve(spec1, config, "spec1", Some(String::new()))?;
    let spec2 = resolve(spec2, config, "spec2", Some(String::new()))?;
    if !spec1.is_empty() || !spec2.is_empty() {
        if spec1.is_empty() || spec2.is_empty() {
            return Err(validation("--spec1 and --spec2 must be given together".into()));
        }
        return Ok(AnonymizationRequest::icsa(
            parse_scatter_spec(&spec1)?,
            parse_scatter_spec(&spec2)?,
        ));
    }
    let name = resolve(method, config, "method", Some("iii-iii".to_string()))?;
    method_by_name(&name)
        .ok_or_else(|| validation(format!("unknown method {name:?}; known: {METHOD_NAMES:?}")))
}

fn setup_jobs(jobs: Option<usize>, config: &ConfigMap) -> Result<(), Error> {
    let jobs = resolve(jobs, config, "jobs", Some(0))?;
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| validation(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run_anonymize(args: AnonymizeArgs) -> Result<ExitCode, Error> {
    let config = load_config(args.common.config.as_deref())?;
    setup_jobs(args.common.jobs, &config)?;
    let input = resolve(args.input, &config, "input", None)?;
    let output = resolve(args.output, &config, "output", None)?;
    let seed = resolve(args.common.seed, &config, "seed", Some(0))?;
    let request = resolve_request(args.method, args.spec1, args.spec2, &config)?;

    let binary = resolve(args.binary, &config, "binary", Some(String::new()))?;
    let hints = SchemaHints {
        binary: if binary.is_empty() {
            Vec::new()
        } else {
            binary.split(',').map(|s| s.trim().to_string()).collect()
        },
        ..Default::default()
    };
    let loaded = load_csv(&input, &hints)?;
    let mut rng = RngStream::new(seed, 0);
    let anon = icsa::anonymize::anonymize(&loaded.data, &request, &mut rng)?;
    write_data_csv(&output, &anon)?;
    println!(
        "anonymized {} rows x {} columns -> {}",
        anon.nrows(),
        anon.ncols(),
        output.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_simulate(args: SimulateArgs) -> Result<ExitCode, Error> {
    let config = load_config(args.common.config.as_deref())?;
    setup_jobs(args.common.jobs, &config)?;
    let output = resolve(args.output, &config, "output", None)?;
    let seed = resolve(args.common.seed, &config, "seed", Some(0))?;

    let cfg = if args.full_grid {
        GridConfig {
            scenario: resolve(args.scenario, &config, "scenario", Some(1))?,
            ns: vec![20, 40, 120, 240, 480],
            ps: vec![3, 7, 15, 31],
            kappas: vec![0.0, 2.0, 4.0, 8.0, 16.0],
            replications: resolve(args.reps, &config, "reps", Some(1000))?,
            methods: METHOD_NAMES.iter().map(|s| s.to_string()).collect(),
            seed,
        }
    } else {
        let methods_raw = resolve(args.methods, &config, "methods", Some("sa,iii-iii".into()))?;
        let methods: Vec<String> = if methods_raw == "all" {
            METHOD_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            methods_raw.split(',').map(|s| s.trim().to_string()).collect()
        };
        for m in &methods {
            if method_by_name(m).is_none() {
                return Err(validation(format!("unknown method {m:?}; known: {METHOD_NAMES:?}")));
            }
        }
        GridConfig {
            scenario: resolve(args.scenario, &config, "scenario", Some(1))?,
            ns: parse_list(&resolve(args.n, &config, "n", Some("40".into()))?, "--n")?,
            ps: parse_list(&resolve(args.p, &config, "p", Some("3".into()))?, "--p")?,
            kappas: parse_list(&resolve(args.kappa, &config, "kappa", Some("16".into()))?, "--kappa")?,
            replications: resolve(args.reps, &config, "reps", Some(200))?,
            methods,
            seed,
        }
    };
    if !(cfg.scenario == 1 || cfg.scenario == 2) {
        return Err(validation(format!("scenario must be 1 or 2, got {}", cfg.scenario)));
    }

    let rows = run_grid(&cfg)?;
    write_grid_csv(&output, &rows)?;
    println!("wrote {} grid rows -> {}", rows.len(), output.display());
    Ok(ExitCode::SUCCESS)
}

fn run_evaluate(args: EvaluateArgs) -> Result<ExitCode, Error> {
    let config = load_config(args.common.config.as_deref())?;
    setup_jobs(args.common.jobs, &config)?;
    let input: PathBuf = resolve(args.input, &config, "input", None)?;
    if !input.exists() {
        eprintln!(
            "evaluate skipped: dataset {} not found (supply the processed \
             30-attribute file with an outlier flag column)",
            input.display()
        );
        return Ok(ExitCode::from(2));
    }
    let seed = resolve(args.common.seed, &config, "seed", Some(0))?;
    let mut cfg = EvaluateConfig::new(seed);
    cfg.runs = resolve(args.runs, &config, "runs", Some(2000))?;
    cfg.bootstrap = resolve(args.bootstrap, &config, "bootstrap", Some(2000))?;
    cfg.method = resolve_request(args.method, None, None, &config)?;

    let outlier_column = resolve(args.outlier_column, &config, "outlier-column", Some(String::new()))?;
    let hints = SchemaHints {
        outlier_column: if outlier_column.is_empty() {
            None
        } else {
            Some(outlier_column)
        },
        ..Default::default()
    };
    let loaded = load_csv(&input, &hints)?;
    println!(
        "loaded {} rows, {} attributes, {} flagged outliers",
        loaded.data.nrows(),
        loaded.data.ncols(),
        loaded.outliers.len()
    );
    let report = evaluate_real(&loaded.data, &loaded.outliers, &cfg)?;

    println!("variable,metric,ratio,lower,upper");
    for row in &report.rows {
        println!(
            "{},{},{:.3},{:.3},{:.3}",
            row.variable, row.metric, row.ratio, row.lower, row.upper
        );
    }
    let (wins, total) = report.per_variable_wins();
    println!("per-variable ratios above 1.0: {wins}/{total}");
    println!(
        "failed runs: icsa {}, sa {}; infinite RPE samples dropped: icsa {}, sa {}",
        report.failed_runs[0], report.failed_runs[1], report.infinite_rpe[0], report.infinite_rpe[1]
    );
    if let Some(output) = args.output.or_else(|| config.get("output").map(PathBuf::from)) {
        write_report_csv(&output, &report)?;
        println!("report -> {}", output.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn run_check_theorem(args: CheckTheoremArgs) -> Result<ExitCode, Error> {
    let config = load_config(args.common.config.as_deref())?;
    setup_jobs(args.common.jobs, &config)?;
    let seed = resolve(args.common.seed, &config, "seed", Some(0))?;
    let n = resolve(args.n, &config, "n", Some(20))?;
    let p = resolve(args.p, &config, "p", Some(4))?;
    let m = resolve(args.m, &config, "M", Some(1.0))?;
    let hs: Vec<f64> = parse_list(
        &resolve(args.h, &config, "H", Some("100,1000,10000".into()))?,
        "--H",
    )?;
    let trials = resolve(args.trials, &config, "trials", Some(1000))?;

    let mut rows = Vec::new();
    let mut all_pass = true;
    println!("H,empirical_max,bound,pass");
    for (i, &h) in hs.iter().enumerate() {
        let mut rng = RngStream::new(seed, i as u64);
        let data = OutlierConstruction::uniform_ball(n, p, m, h, &mut rng);
        let report = sa_min_ratio(&data, trials, &mut rng)?;
        println!(
            "{h},{:.6e},{:.6e},{}",
            report.empirical_max, report.bound, report.pass
        );
        all_pass &= report.pass;
        rows.push((h, report));
    }
    if let Some(output) = args.output.or_else(|| config.get("output").map(PathBuf::from)) {
        write_theorem_csv(&output, &rows)?;
        println!("table -> {}", output.display());
    }
    if all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("bound violated");
        Ok(ExitCode::from(3))
    }
}
