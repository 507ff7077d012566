//! Command-line front end for extrapolated cross-validation.
//!
//! Every command reads an optional JSON config, applies flag overrides, writes
//! the effective config to the output directory and then runs. Failures print
//! one `error[<class>]: <message>` line and exit with status 1.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecv::baselines::{compare, prefix_mean_risks, BaselineMethod, BaselineSpec, Metric};
use ecv::dataset::{load_csv, simulate, ResponseColumn};
use ecv::predictors::fit_ensemble;
use ecv::risk::risk_surface;
use ecv::rng::{derive_seed, tag};
use ecv::sampling::SamplingMode;
use ecv::tuning::{build_grid, ecv_tune, tune_feature_fraction, Selection, Surface};
use ecv::{fmt_f64, Centering, Dataset, EcvError, EnsembleSize, PredictorSpec, Result, SyntheticModel, SyntheticSpec};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "ecv", version, about = "Extrapolated cross-validation for bagging and subagging ensembles")]
struct Cli {
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Master seed (falls back to ECV_SEED, then 0)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/test CSV files
    Simulate(SimulateArgs),
    /// Tune (k, M) and write the selection trace and risk surface
    Tune(TuneArgs),
    /// Export the extrapolated risk surface over (k, M)
    Surface(SurfaceArgs),
    /// Compare ECV against sample-split and K-fold CV
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// linear, quad or tanh (also m1, m2, m3)
    #[arg(long)]
    model: Option<SyntheticModel>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// AR(1) feature correlation
    #[arg(long)]
    rho: Option<f64>,
    /// Noise standard deviation
    #[arg(long)]
    sigma: Option<f64>,
    /// Test set size
    #[arg(long)]
    n_test: Option<usize>,
}

#[derive(Args)]
struct DataArgs {
    /// Training CSV
    #[arg(long)]
    train: Option<PathBuf>,
    /// Test CSV
    #[arg(long)]
    test: Option<PathBuf>,
    /// Response column: name, zero-based index, or "last"
    #[arg(long)]
    response: Option<String>,
    /// CSV files have no header row
    #[arg(long)]
    no_header: bool,
}

#[derive(Args)]
struct PredictorArgs {
    /// null, ridge, ridgeless, knn or tree
    #[arg(long)]
    predictor: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    neighbors: Option<usize>,
    #[arg(long)]
    min_node_size: Option<usize>,
    #[arg(long)]
    feature_fraction: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
}

#[derive(Args)]
struct EcvArgs {
    /// Grid unit exponent: k0 = floor(n^nu)
    #[arg(long)]
    nu: Option<f64>,
    /// Members fitted per grid point
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// avg or mom
    #[arg(long)]
    centering: Option<String>,
    /// Median-of-means exponent
    #[arg(long)]
    mom_a: Option<f64>,
    /// bagging or subagging
    #[arg(long)]
    mode: Option<SamplingMode>,
    /// Ensemble-size budget
    #[arg(long)]
    m_max: Option<usize>,
    /// To-bag factor
    #[arg(long)]
    zeta: Option<f64>,
    /// additive or multiplicative
    #[arg(long)]
    selection: Option<Selection>,
    /// Make delta relative to the null risk
    #[arg(long)]
    normalize: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    predictor: PredictorArgs,
    #[command(flatten)]
    ecv: EcvArgs,
    /// Comma-separated tree feature fractions to tune first
    #[arg(long, value_delimiter = ',')]
    mtry_grid: Option<Vec<f64>>,
    /// Comma-separated ensemble sizes for the surface CSV ("inf" allowed)
    #[arg(long, value_delimiter = ',')]
    m_list: Option<Vec<String>>,
    /// nmse or mse, used when --test is given
    #[arg(long)]
    metric: Option<Metric>,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    predictor: PredictorArgs,
    #[command(flatten)]
    ecv: EcvArgs,
    /// Comma-separated ensemble sizes ("inf" allowed)
    #[arg(long, value_delimiter = ',')]
    m_list: Option<Vec<String>>,
    /// Comma-separated k values instead of the default grid
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Add the test risk of each finite (k, M) cell
    #[arg(long)]
    with_test: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    predictor: PredictorArgs,
    #[command(flatten)]
    ecv: EcvArgs,
    /// Directory with train.csv and test.csv; repeat for a sweep
    #[arg(long)]
    dataset: Vec<PathBuf>,
    /// Split-CV training fraction
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// nmse or mse
    #[arg(long)]
    metric: Option<Metric>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error[usage]: {line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.class());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => config::load(path)?,
        None => RunConfig::default(),
    };
    let seed = match cli.seed.or(cfg.seed) {
        Some(s) => s,
        None => match std::env::var("ECV_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| EcvError::invalid(format!("ECV_SEED='{v}' is not an unsigned integer")))?,
            Err(_) => 0,
        },
    };
    cfg.seed = Some(seed);
    cfg.ecv.seed = seed;
    if let Some(out) = cli.out {
        cfg.io.out = out;
    }

    match &cli.command {
        Command::Simulate(a) => apply_simulate(&mut cfg, a),
        Command::Tune(a) => {
            apply_data(&mut cfg, &a.data);
            apply_predictor(&mut cfg, &a.predictor)?;
            apply_ecv(&mut cfg, &a.ecv)?;
            set(&mut cfg.report.feature_fractions, a.mtry_grid.clone());
            set(&mut cfg.report.m_list, a.m_list.clone());
            set(&mut cfg.report.metric, a.metric);
        }
        Command::Surface(a) => {
            apply_data(&mut cfg, &a.data);
            apply_predictor(&mut cfg, &a.predictor)?;
            apply_ecv(&mut cfg, &a.ecv)?;
            set(&mut cfg.report.m_list, a.m_list.clone());
            if a.grid.is_some() {
                cfg.report.grid = a.grid.clone();
            }
            cfg.report.with_test |= a.with_test;
        }
        Command::Compare(a) => {
            apply_data(&mut cfg, &a.data);
            apply_predictor(&mut cfg, &a.predictor)?;
            apply_ecv(&mut cfg, &a.ecv)?;
            if !a.dataset.is_empty() {
                cfg.io.datasets = a.dataset.clone();
            }
            set(&mut cfg.baseline.alpha, a.alpha);
            set(&mut cfg.baseline.folds, a.folds);
            set(&mut cfg.report.metric, a.metric);
        }
    }
    cfg.predictor.validate()?;
    cfg.ecv.validate()?;

    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(EcvError::invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| EcvError::invalid(format!("thread pool: {e}")))?;
    }

    let out = cfg.io.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| EcvError::io(&out, e))?;
    config::write(&cfg, &out.join("config.json"))?;

    match cli.command {
        Command::Simulate(_) => cmd_simulate(&cfg),
        Command::Tune(_) => cmd_tune(&cfg),
        Command::Surface(_) => cmd_surface(&cfg),
        Command::Compare(_) => cmd_compare(&cfg),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_simulate(cfg: &mut RunConfig, a: &SimulateArgs) {
    let s = &mut cfg.synthetic;
    set(&mut s.model, a.model);
    set(&mut s.n, a.n);
    set(&mut s.p, a.p);
    set(&mut s.rho, a.rho);
    set(&mut s.sigma, a.sigma);
    set(&mut s.n_test, a.n_test);
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    if a.train.is_some() {
        cfg.io.train = a.train.clone();
    }
    if a.test.is_some() {
        cfg.io.test = a.test.clone();
    }
    set(&mut cfg.io.response, a.response.clone());
    if a.no_header {
        cfg.io.header = false;
    }
}

fn apply_predictor(cfg: &mut RunConfig, a: &PredictorArgs) -> Result<()> {
    if let Some(kind) = &a.predictor {
        cfg.predictor = match kind.to_ascii_lowercase().as_str() {
            "null" => PredictorSpec::Null,
            "ridge" => PredictorSpec::ridge(),
            "ridgeless" => PredictorSpec::Ridgeless,
            "knn" => PredictorSpec::knn(),
            "tree" | "forest" => PredictorSpec::forest_tree(),
            other => return Err(EcvError::invalid(format!("unknown predictor '{other}'"))),
        };
    }
    let misplaced = |flag: &str| EcvError::invalid(format!("--{flag} does not apply to predictor '{}'", cfg.predictor.name()));
    let mut spec = cfg.predictor.clone();
    match &mut spec {
        PredictorSpec::Ridge { lambda } => set(lambda, a.lambda),
        _ if a.lambda.is_some() => return Err(misplaced("lambda")),
        _ => {}
    }
    match &mut spec {
        PredictorSpec::Knn { neighbors } => set(neighbors, a.neighbors),
        _ if a.neighbors.is_some() => return Err(misplaced("neighbors")),
        _ => {}
    }
    match &mut spec {
        PredictorSpec::Tree {
            min_node_size,
            feature_fraction,
            max_depth,
        } => {
            set(min_node_size, a.min_node_size);
            set(feature_fraction, a.feature_fraction);
            if a.max_depth.is_some() {
                *max_depth = a.max_depth;
            }
        }
        _ if a.min_node_size.is_some() => return Err(misplaced("min-node-size")),
        _ if a.feature_fraction.is_some() => return Err(misplaced("feature-fraction")),
        _ if a.max_depth.is_some() => return Err(misplaced("max-depth")),
        _ => {}
    }
    cfg.predictor = spec;
    Ok(())
}

fn apply_ecv(cfg: &mut RunConfig, a: &EcvArgs) -> Result<()> {
    let e = &mut cfg.ecv;
    set(&mut e.nu, a.nu);
    set(&mut e.m0, a.m0);
    set(&mut e.delta, a.delta);
    set(&mut e.mode, a.mode);
    set(&mut e.selection, a.selection);
    if a.m_max.is_some() {
        e.m_max = a.m_max;
    }
    if a.zeta.is_some() {
        e.zeta = a.zeta;
    }
    e.normalize |= a.normalize;
    let current_a = match e.centering {
        Centering::Mom { a } => a,
        Centering::Avg => 1.0,
    };
    match a.centering.as_deref().map(str::to_ascii_lowercase).as_deref() {
        None => {}
        Some("avg") => e.centering = Centering::Avg,
        Some("mom") => e.centering = Centering::Mom { a: current_a },
        Some(other) => return Err(EcvError::invalid(format!("unknown centering '{other}'"))),
    }
    if let Some(mom_a) = a.mom_a {
        match &mut e.centering {
            Centering::Mom { a } => *a = mom_a,
            Centering::Avg => return Err(EcvError::invalid("--mom-a needs --centering mom")),
        }
    }
    Ok(())
}

fn response_column(cfg: &RunConfig) -> Result<ResponseColumn> {
    cfg.io.response.parse()
}

fn load(cfg: &RunConfig, path: &Path) -> Result<Dataset> {
    load_csv(path, &response_column(cfg)?, cfg.io.header)
}

fn train_set(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .io
        .train
        .as_ref()
        .ok_or_else(|| EcvError::invalid("a training CSV is required (--train)"))?;
    load(cfg, path)
}

fn test_set(cfg: &RunConfig) -> Result<Option<Dataset>> {
    cfg.io.test.as_ref().map(|p| load(cfg, p)).transpose()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| EcvError::io(path, e))
}

fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let s = &cfg.synthetic;
    if s.n_test == 0 {
        return Err(EcvError::invalid("n_test must be at least 1"));
    }
    let seed = cfg.ecv.seed;
    let spec = SyntheticSpec {
        model: s.model,
        n: s.n,
        p: s.p,
        rho_ar: s.rho,
        sigma: s.sigma,
        seed,
    };
    let train = simulate(&spec)?;
    let test = simulate(&SyntheticSpec {
        n: s.n_test,
        seed: derive_seed(seed, &[tag::TEST_SET]),
        ..spec
    })?;
    train.write_csv(cfg.io.out.join("train.csv"))?;
    test.write_csv(cfg.io.out.join("test.csv"))
}

fn cmd_tune(cfg: &RunConfig) -> Result<()> {
    let train = train_set(cfg)?;
    let test = test_set(cfg)?;
    let sizes = cfg.report.sizes()?;
    let (fraction, result) = if cfg.report.feature_fractions.is_empty() {
        (None, ecv_tune(&train, &cfg.predictor, &cfg.ecv)?)
    } else {
        let (f, r) = tune_feature_fraction(&train, &cfg.predictor, &cfg.report.feature_fractions, &cfg.ecv)?;
        (Some(f), r)
    };

    let mut summary: serde_json::Value = serde_json::from_str(&result.summary_json()?)?;
    if let Some(f) = fraction {
        summary["feature_fraction"] = serde_json::json!(f);
    }
    if let Some(test) = &test {
        let pred = result.predict(test.features().view())?;
        let err = cfg.report.metric.eval(pred.view(), test.response().view())?;
        summary["test_metric"] = serde_json::json!(cfg.report.metric);
        summary["test_error"] = serde_json::json!(err);
    }
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write_text(&cfg.io.out.join("tune.json"), &text)?;

    if let Surface::Extrapolated(surface) = &result.surface {
        surface.write_csv(cfg.io.out.join("surface.csv"), &sizes)?;
    }
    println!("k_hat={} m_hat={} estimated_risk={}", result.k_hat, result.m_hat, fmt_f64(result.estimated_risk));
    Ok(())
}

fn cmd_surface(cfg: &RunConfig) -> Result<()> {
    let train = train_set(cfg)?;
    let sizes = cfg.report.sizes()?;
    let grid = match &cfg.report.grid {
        Some(g) => {
            if g.iter().any(|&k| k > train.n()) {
                return Err(EcvError::invalid(format!("grid values must not exceed n={}", train.n())));
            }
            g.clone()
        }
        None => build_grid(train.n(), cfg.ecv.nu)?,
    };
    let e = &cfg.ecv;
    let surface = risk_surface(&train, &cfg.predictor, &grid, e.m0, e.mode, &e.centering, e.seed)?;
    let entries = surface.table(&sizes);

    let test_risks = if cfg.report.with_test {
        let test = test_set(cfg)?.ok_or_else(|| EcvError::invalid("--with-test needs --test"))?;
        Some(surface_test_risks(cfg, &train, &test, &grid, &sizes)?)
    } else {
        None
    };

    let mut text = String::from("k,M,estimate,oob_min,oob_mean,skipped_pairs");
    if test_risks.is_some() {
        text.push_str(",test_risk");
    }
    text.push('\n');
    for entry in &entries {
        text.push_str(&format!(
            "{},{},{},{},{},{}",
            entry.k,
            entry.m,
            fmt_f64(entry.estimate),
            entry.oob_min,
            fmt_f64(entry.oob_mean),
            entry.skipped_pairs
        ));
        if let Some(risks) = &test_risks {
            text.push(',');
            if let (Some(row), EnsembleSize::Finite(m)) = (risks.iter().find(|r| r.0 == entry.k), entry.m) {
                text.push_str(&fmt_f64(row.1[m - 1]));
            }
        }
        text.push('\n');
    }
    write_text(&cfg.io.out.join("surface.csv"), &text)
}

/// Test risk of the first `M` members of one large ensemble per `k`.
fn surface_test_risks(cfg: &RunConfig, train: &Dataset, test: &Dataset, grid: &[usize], sizes: &[EnsembleSize]) -> Result<Vec<(usize, Vec<f64>)>> {
    let largest = sizes
        .iter()
        .filter_map(|m| match m {
            EnsembleSize::Finite(m) => Some(*m),
            EnsembleSize::Infinite => None,
        })
        .max()
        .unwrap_or(1);
    let e = &cfg.ecv;
    grid.iter()
        .map(|&k| {
            let risks = if k == 0 {
                vec![test.null_risk(); largest]
            } else {
                let ens = fit_ensemble(&cfg.predictor, train, k, largest, e.mode, e.seed)?;
                prefix_mean_risks(&ens, test.features().view(), test.response().view())?
            };
            Ok((k, risks))
        })
        .collect()
}

fn cmd_compare(cfg: &RunConfig) -> Result<()> {
    let jobs: Vec<(Dataset, Dataset, String)> = if cfg.io.datasets.is_empty() {
        let test = test_set(cfg)?.ok_or_else(|| EcvError::invalid("compare needs --test or --dataset"))?;
        vec![(train_set(cfg)?, test, "compare".to_string())]
    } else {
        cfg.io
            .datasets
            .iter()
            .map(|dir| {
                let name = dir
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "dataset".into());
                Ok((load(cfg, &dir.join("train.csv"))?, load(cfg, &dir.join("test.csv"))?, name))
            })
            .collect::<Result<_>>()?
    };

    for (train, test, name) in jobs {
        let mut ecv = cfg.ecv.clone();
        if ecv.m_max.is_none() {
            ecv.m_max = Some(cfg.baseline.m_max);
        }
        let grid = build_grid(train.n(), ecv.nu)?;
        let baseline = |method| BaselineSpec {
            method,
            m_max: cfg.baseline.m_max,
            grid: grid.clone(),
            seed: ecv.seed,
        };
        let baselines = [
            baseline(BaselineMethod::Split {
                alpha: cfg.baseline.alpha,
            }),
            baseline(BaselineMethod::KFold {
                folds: cfg.baseline.folds,
            }),
        ];
        let report = compare(&train, &test, &cfg.predictor, &ecv, &baselines, cfg.report.metric)?;
        report.write_csv(cfg.io.out.join(format!("{name}.csv")))?;
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        write_text(&cfg.io.out.join(format!("{name}.json")), &text)?;
    }
    Ok(())
}
