//! Sample-split and K-fold cross-validation over the same `(M, k)` grid, and
//! the head-to-head comparison against extrapolated cross-validation.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{mse, nmse, Dataset};
use crate::error::{EcvError, Result};
use crate::predictors::{fit_ensemble, FittedEnsemble, PredictorSpec};
use crate::rng::{substream, tag};
use crate::sampling::SamplingMode;
use crate::tuning::{build_grid, ecv_tune, EcvConfig, Surface, TuneResult, TunedPredictor};

pub const DEFAULT_SPLIT_ALPHA: f64 = 5.0 / 6.0;
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum BaselineMethod {
    /// Train on a `⌈α·n⌉`-row part, validate on the rest.
    Split { alpha: f64 },
    KFold { folds: usize },
}

impl BaselineMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BaselineMethod::Split { .. } => "split-cv",
            BaselineMethod::KFold { .. } => "kfold-cv",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub method: BaselineMethod,
    pub m_max: usize,
    pub grid: Vec<usize>,
    pub seed: u64,
}

impl BaselineSpec {
    pub fn validate(&self) -> Result<()> {
        match self.method {
            BaselineMethod::Split { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                return Err(EcvError::invalid("split fraction alpha must lie in (0, 1)"))
            }
            BaselineMethod::KFold { folds } if folds < 2 => return Err(EcvError::invalid("need at least two folds")),
            _ => {}
        }
        if self.m_max == 0 {
            return Err(EcvError::invalid("m_max must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(EcvError::invalid("grid is empty"));
        }
        Ok(())
    }
}

/// Validation error of every `(k, M)` pair; `errors[i][M − 1]` belongs to `grid[i]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationTable {
    pub grid: Vec<usize>,
    pub m_max: usize,
    /// `None` where `k` exceeds the training part.
    pub errors: Vec<Option<Vec<f64>>>,
}

impl ValidationTable {
    /// Minimizer over `(M, k)`, preferring smaller `M`, then smaller `k`.
    pub fn argmin(&self) -> Result<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for m in 1..=self.m_max {
            for (&k, row) in self.grid.iter().zip(&self.errors) {
                let Some(row) = row else { continue };
                let v = row[m - 1];
                if best.is_none_or(|b| v < b.2) {
                    best = Some((k, m, v));
                }
            }
        }
        best.ok_or_else(|| EcvError::TuningFailed("every grid row is missing".into()))
    }
}

/// Squared error of the running member means on `(x, y)`: entry `M − 1` is
/// the risk of the first `M` members.
pub fn prefix_mean_risks(ens: &FittedEnsemble, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
    let preds = ens.member_predictions(x)?;
    let mut sum = Array1::zeros(x.nrows());
    let mut out = Vec::with_capacity(preds.len());
    for (m, p) in preds.iter().enumerate() {
        sum += p;
        let mean = &sum / (m + 1) as f64;
        out.push(mse(mean.view(), y));
    }
    Ok(out)
}

fn null_row(y: ArrayView1<'_, f64>, m_max: usize) -> Vec<f64> {
    vec![y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64; m_max]
}

/// Validation rows over the grid for one train/validation partition.
fn partition_table(
    train: &Dataset,
    valid: &Dataset,
    spec: &PredictorSpec,
    grid: &[usize],
    m_max: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<(Vec<Option<Vec<f64>>>, usize)> {
    let mut rows = Vec::with_capacity(grid.len());
    let mut fits = 0;
    for &k in grid {
        if k == 0 {
            rows.push(Some(null_row(valid.response().view(), m_max)));
        } else if k > train.n() {
            rows.push(None);
        } else {
            let ens = fit_ensemble(spec, train, k, m_max, mode, seed)?;
            fits += m_max;
            rows.push(Some(prefix_mean_risks(&ens, valid.features().view(), valid.response().view())?));
        }
    }
    Ok((rows, fits))
}

fn permuted_rows(n: usize, seed: u64, key: u64) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut substream(seed, &[key]));
    rows
}

fn refit(data: &Dataset, spec: &PredictorSpec, k: usize, m: usize, mode: SamplingMode, seed: u64) -> Result<TunedPredictor> {
    if k == 0 {
        return Ok(TunedPredictor::Null { p: data.p() });
    }
    Ok(TunedPredictor::Ensemble(fit_ensemble(spec, data, k, m, mode, seed)?))
}

fn finish(method: &str, data: &Dataset, spec: &PredictorSpec, bspec: &BaselineSpec, mode: SamplingMode, table: ValidationTable, fits: usize) -> Result<TuneResult> {
    let (k_hat, m_hat, err) = table.argmin()?;
    let m_hat = if k_hat == 0 { 1 } else { m_hat };
    let predictor = refit(data, spec, k_hat, m_hat, mode, bspec.seed)?;
    let refits = if k_hat == 0 { 0 } else { m_hat };
    Ok(TuneResult {
        method: method.into(),
        grid: bspec.grid.clone(),
        k_hat,
        m_hat,
        estimated_risk: err,
        surface: Surface::Validation(table),
        to_bag: None,
        budget_clipped: false,
        multiplicative_fallback: false,
        base_fits: fits + refits,
        predictor,
    })
}

/// Hold-out selection of `(M, k)`; the winner is refitted on all of `data`.
pub fn split_cv_tune(data: &Dataset, spec: &PredictorSpec, bspec: &BaselineSpec, mode: SamplingMode) -> Result<TuneResult> {
    bspec.validate()?;
    spec.validate()?;
    let BaselineMethod::Split { alpha } = bspec.method else {
        return Err(EcvError::invalid("split_cv_tune needs a split baseline"));
    };
    let n = data.n();
    let n_train = (alpha * n as f64).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(EcvError::invalid(format!("alpha={alpha} leaves an empty part of n={n} rows")));
    }
    let order = permuted_rows(n, bspec.seed, tag::SPLIT);
    let mut train_rows = order[..n_train].to_vec();
    let mut valid_rows = order[n_train..].to_vec();
    train_rows.sort_unstable();
    valid_rows.sort_unstable();
    let (train, valid) = (data.select_rows(&train_rows), data.select_rows(&valid_rows));
    let (errors, fits) = partition_table(&train, &valid, spec, &bspec.grid, bspec.m_max, mode, bspec.seed)?;
    let table = ValidationTable {
        grid: bspec.grid.clone(),
        m_max: bspec.m_max,
        errors,
    };
    finish("split-cv", data, spec, bspec, mode, table, fits)
}

/// Fold membership: a random permutation dealt round-robin into `folds` parts.
pub fn kfold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || folds > n / 2 {
        return Err(EcvError::invalid(format!("folds must lie in [2, n/2] for n={n}, got {folds}")));
    }
    let order = permuted_rows(n, seed, tag::FOLD);
    let mut parts = vec![Vec::new(); folds];
    for (i, &row) in order.iter().enumerate() {
        parts[i % folds].push(row);
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    Ok(parts)
}

/// Averages per-fold tables; a row is missing if it is missing in any fold.
pub(crate) fn kfold_table(data: &Dataset, spec: &PredictorSpec, folds: &[Vec<usize>], grid: &[usize], m_max: usize, mode: SamplingMode, seed: u64) -> Result<(ValidationTable, usize)> {
    let n = data.n();
    let mut sums: Vec<Option<Vec<f64>>> = vec![Some(vec![0.0; m_max]); grid.len()];
    let mut fits = 0;
    for fold in folds {
        if fold.is_empty() {
            return Err(EcvError::invalid("a fold has no rows"));
        }
        let mut in_fold = vec![false; n];
        for &i in fold {
            in_fold[i] = true;
        }
        let train_rows: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
        let (train, valid) = (data.select_rows(&train_rows), data.select_rows(fold));
        let (rows, f) = partition_table(&train, &valid, spec, grid, m_max, mode, seed)?;
        fits += f;
        for (acc, row) in sums.iter_mut().zip(rows) {
            match (acc.as_mut(), row) {
                (Some(a), Some(r)) => a.iter_mut().zip(r).for_each(|(a, r)| *a += r),
                _ => *acc = None,
            }
        }
    }
    let errors = sums
        .into_iter()
        .map(|row| row.map(|r| r.into_iter().map(|v| v / folds.len() as f64).collect()))
        .collect();
    Ok((
        ValidationTable {
            grid: grid.to_vec(),
            m_max,
            errors,
        },
        fits,
    ))
}

/// K-fold selection of `(M, k)`; every fold uses the same member seeds.
pub fn kfold_cv_tune(data: &Dataset, spec: &PredictorSpec, bspec: &BaselineSpec, mode: SamplingMode) -> Result<TuneResult> {
    bspec.validate()?;
    spec.validate()?;
    let BaselineMethod::KFold { folds } = bspec.method else {
        return Err(EcvError::invalid("kfold_cv_tune needs a k-fold baseline"));
    };
    let parts = kfold_assignment(data.n(), folds, bspec.seed)?;
    let (table, fits) = kfold_table(data, spec, &parts, &bspec.grid, bspec.m_max, mode, bspec.seed)?;
    finish("kfold-cv", data, spec, bspec, mode, table, fits)
}

pub fn baseline_tune(data: &Dataset, spec: &PredictorSpec, bspec: &BaselineSpec, mode: SamplingMode) -> Result<TuneResult> {
    match bspec.method {
        BaselineMethod::Split { .. } => split_cv_tune(data, spec, bspec, mode),
        BaselineMethod::KFold { .. } => kfold_cv_tune(data, spec, bspec, mode),
    }
}

/// Test-set error measure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Squared error over the variance of the test response.
    #[default]
    Nmse,
    Mse,
}

impl std::str::FromStr for Metric {
    type Err = EcvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nmse" => Ok(Metric::Nmse),
            "mse" => Ok(Metric::Mse),
            _ => Err(EcvError::invalid(format!("unknown metric '{s}'"))),
        }
    }
}

impl Metric {
    pub fn eval(&self, pred: ArrayView1<'_, f64>, truth: ArrayView1<'_, f64>) -> Result<f64> {
        match self {
            Metric::Nmse => nmse(pred, truth),
            Metric::Mse => Ok(mse(pred, truth)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: String,
    pub m_hat: usize,
    pub k_hat: usize,
    pub tune_seconds: f64,
    /// Test error of the refitted predictor under the report's metric.
    pub test_nmse: f64,
    /// `test_nmse` minus the best test error over the shared `(M, k)` grid.
    pub suboptimality: f64,
    pub base_fits: usize,
    pub config_hash: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub metric: Metric,
    pub grid: Vec<usize>,
    pub m_max: usize,
    /// Best test error over `[m_max] × grid` and where it is attained.
    pub oracle_error: f64,
    pub oracle_k: usize,
    pub oracle_m: usize,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    /// CSV with columns `method,m_hat,k_hat,tune_seconds,test_nmse,suboptimality`.
    pub fn to_csv(&self) -> String {
        let mut text = String::from("method,m_hat,k_hat,tune_seconds,test_nmse,suboptimality\n");
        for r in &self.rows {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method,
                r.m_hat,
                r.k_hat,
                crate::fmt_f64(r.tune_seconds),
                crate::fmt_f64(r.test_nmse),
                crate::fmt_f64(r.suboptimality)
            ));
        }
        text
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| EcvError::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| EcvError::io(path, e))
    }
}

/// FNV-1a hash of the settings every method must share.
pub fn config_hash(grid: &[usize], spec: &PredictorSpec, mode: SamplingMode) -> u64 {
    let text = format!("{grid:?}|{}|{mode:?}", serde_json::to_string(spec).unwrap_or_default());
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Best test error over `[m_max] × grid` for ensembles fitted on all of `train`.
///
/// Members use the same seed as the tuned ensembles, so an ECV result with
/// `M̂ ≤ m_max` is one of the candidates.
pub fn oracle_surface(train: &Dataset, test: &Dataset, spec: &PredictorSpec, grid: &[usize], m_max: usize, mode: SamplingMode, seed: u64, metric: Metric) -> Result<(usize, usize, f64)> {
    let scale = metric.eval(Array1::zeros(test.n()).view(), test.response().view())? / null_row(test.response().view(), 1)[0];
    let mut errors = Vec::with_capacity(grid.len());
    for &k in grid {
        if k == 0 {
            errors.push(Some(null_row(test.response().view(), m_max)));
        } else if k > train.n() {
            errors.push(None);
        } else {
            let ens = fit_ensemble(spec, train, k, m_max, mode, seed)?;
            errors.push(Some(prefix_mean_risks(&ens, test.features().view(), test.response().view())?));
        }
    }
    let (k, m, err) = ValidationTable {
        grid: grid.to_vec(),
        m_max,
        errors,
    }
    .argmin()?;
    Ok((k, m, err * scale))
}

/// Tunes with extrapolated CV and each baseline on `train`, then scores the
/// refitted predictors on `test`.
pub fn compare(train: &Dataset, test: &Dataset, spec: &PredictorSpec, ecv: &EcvConfig, baselines: &[BaselineSpec], metric: Metric) -> Result<CompareReport> {
    ecv.validate()?;
    let grid = build_grid(train.n(), ecv.nu)?;
    let m_max = baselines
        .iter()
        .map(|b| b.m_max)
        .chain(ecv.m_max)
        .max()
        .ok_or_else(|| EcvError::invalid("compare needs m_max from the ECV config or a baseline"))?;
    for b in baselines {
        if b.grid != grid {
            return Err(EcvError::invalid(format!("{} uses a different grid than ECV", b.method.name())));
        }
    }
    let hash = config_hash(&grid, spec, ecv.mode);

    let mut runs: Vec<(TuneResult, f64)> = Vec::with_capacity(1 + baselines.len());
    let start = Instant::now();
    let r = ecv_tune(train, spec, ecv)?;
    runs.push((r, start.elapsed().as_secs_f64()));
    for b in baselines {
        let start = Instant::now();
        let r = baseline_tune(train, spec, b, ecv.mode)?;
        runs.push((r, start.elapsed().as_secs_f64()));
    }
    for (r, _) in &runs {
        if config_hash(&r.grid, spec, ecv.mode) != hash {
            return Err(EcvError::invalid(format!("{} saw a different configuration", r.method)));
        }
    }

    let (oracle_k, oracle_m, oracle_error) = oracle_surface(train, test, spec, &grid, m_max, ecv.mode, ecv.seed, metric)?;
    let rows = runs
        .into_iter()
        .map(|(r, secs)| {
            let pred = r.predict(test.features().view())?;
            let err = metric.eval(pred.view(), test.response().view())?;
            Ok(CompareRow {
                method: r.method.clone(),
                m_hat: r.m_hat,
                k_hat: r.k_hat,
                tune_seconds: secs,
                test_nmse: err,
                suboptimality: err - oracle_error,
                base_fits: r.base_fits,
                config_hash: hash,
            })
        })
        .collect::<Result<_>>()?;
    Ok(CompareReport {
        metric,
        grid,
        m_max,
        oracle_error,
        oracle_k,
        oracle_m,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{simulate, SyntheticModel, SyntheticSpec};
    use crate::predictors::predict_ensemble;

    fn sim(n: usize, p: usize, seed: u64) -> Dataset {
        simulate(&SyntheticSpec {
            model: SyntheticModel::Quad,
            n,
            p,
            rho_ar: 0.5,
            sigma: 0.5,
            seed,
        })
        .unwrap()
    }

    fn split(m_max: usize, grid: Vec<usize>) -> BaselineSpec {
        BaselineSpec {
            method: BaselineMethod::Split {
                alpha: DEFAULT_SPLIT_ALPHA,
            },
            m_max,
            grid,
            seed: 4,
        }
    }

    #[test]
    fn prefix_means_match_from_scratch() {
        for trial in 0..10u64 {
            let d = sim(80, 6, trial);
            let v = sim(40, 6, 100 + trial);
            let spec = if trial % 2 == 0 { PredictorSpec::ridge() } else { PredictorSpec::forest_tree() };
            let ens = fit_ensemble(&spec, &d, 30, 8, SamplingMode::Bagging, trial).unwrap();
            let fast = prefix_mean_risks(&ens, v.features().view(), v.response().view()).unwrap();
            for m in 1..=8 {
                let pred = predict_ensemble(&ens, v.features().view(), Some(m)).unwrap();
                let slow = mse(pred.view(), v.response().view());
                assert!((fast[m - 1] - slow).abs() <= 1e-12 * slow.max(1.0), "m={m}");
            }
        }
    }

    #[test]
    fn identical_members_flat_in_m() {
        let d = sim(60, 5, 1);
        let mut ens = fit_ensemble(&PredictorSpec::ridge(), &d, 20, 1, SamplingMode::Subagging, 1).unwrap();
        ens.members = vec![ens.members[0].clone(); 5];
        let r = prefix_mean_risks(&ens, d.features().view(), d.response().view()).unwrap();
        assert!(r.iter().all(|v| (v - r[0]).abs() < 1e-12 * r[0]));
    }

    #[test]
    fn argmin_tie_rule() {
        let t = ValidationTable {
            grid: vec![0, 10, 20],
            m_max: 3,
            errors: vec![Some(vec![2.0; 3]), Some(vec![1.0, 0.5, 0.5]), Some(vec![0.9, 0.5, 0.4])],
        };
        assert_eq!(t.argmin().unwrap(), (20, 3, 0.4));
        let t = ValidationTable {
            grid: vec![0, 10, 20],
            m_max: 3,
            errors: vec![Some(vec![2.0; 3]), Some(vec![1.0, 0.5, 0.5]), Some(vec![0.9, 0.5, 0.5])],
        };
        assert_eq!(t.argmin().unwrap(), (10, 2, 0.5));
        let none = ValidationTable {
            grid: vec![10],
            m_max: 1,
            errors: vec![None],
        };
        assert!(matches!(none.argmin(), Err(EcvError::TuningFailed(_))));
    }

    #[test]
    fn split_cv_basics() {
        let d = sim(120, 6, 2);
        let grid = build_grid(120, 0.5).unwrap();
        let r = split_cv_tune(&d, &PredictorSpec::ridge(), &split(4, grid.clone()), SamplingMode::Bagging).unwrap();
        let Surface::Validation(t) = &r.surface else { panic!() };
        let (k, m, _) = t.argmin().unwrap();
        assert_eq!(r.k_hat, k);
        assert!(r.k_hat == 0 || r.m_hat == m);
        // 100 training rows: k = 110 does not fit
        let big = split(2, vec![0, 50, 110]);
        let r = split_cv_tune(&d, &PredictorSpec::ridge(), &big, SamplingMode::Bagging).unwrap();
        let Surface::Validation(t) = &r.surface else { panic!() };
        assert!(t.errors[2].is_none() && t.errors[1].is_some());

        let single = split_cv_tune(&d, &PredictorSpec::ridge(), &split(1, grid), SamplingMode::Bagging).unwrap();
        assert_eq!(single.m_hat, 1);
        let bad = BaselineSpec {
            method: BaselineMethod::Split { alpha: 1.0 },
            ..split(2, vec![0])
        };
        assert!(split_cv_tune(&d, &PredictorSpec::ridge(), &bad, SamplingMode::Bagging).is_err());
    }

    #[test]
    fn kfold_guards_and_scan() {
        let d = sim(60, 5, 3);
        assert!(kfold_assignment(60, 31, 0).is_err());
        assert!(kfold_assignment(60, 1, 0).is_err());
        let parts = kfold_assignment(61, 5, 0).unwrap();
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..61).collect::<Vec<_>>());
        assert!(parts.iter().all(|p| p.len() == 12 || p.len() == 13));

        let spec = BaselineSpec {
            method: BaselineMethod::KFold { folds: 3 },
            m_max: 3,
            grid: vec![0, 10, 20, 30],
            seed: 5,
        };
        let r = kfold_cv_tune(&d, &PredictorSpec::ridge(), &spec, SamplingMode::Subagging).unwrap();
        let Surface::Validation(t) = &r.surface else { panic!() };
        let mut best = (0, 0, f64::INFINITY);
        for m in 1..=3 {
            for (i, &k) in t.grid.iter().enumerate() {
                let v = t.errors[i].as_ref().unwrap()[m - 1];
                if v < best.2 {
                    best = (k, m, v);
                }
            }
        }
        assert_eq!((r.k_hat, r.estimated_risk), (best.0, best.2));
        assert_eq!(r.base_fits, 3 * 3 * 3 + if r.k_hat == 0 { 0 } else { r.m_hat });
    }

    #[test]
    fn kfold_invariant_to_fold_order() {
        let d = sim(60, 5, 6);
        let parts = kfold_assignment(60, 4, 1).unwrap();
        let mut rev = parts.clone();
        rev.reverse();
        let grid = [0, 10, 20];
        let (a, _) = kfold_table(&d, &PredictorSpec::forest_tree(), &parts, &grid, 3, SamplingMode::Bagging, 2).unwrap();
        let (b, _) = kfold_table(&d, &PredictorSpec::forest_tree(), &rev, &grid, 3, SamplingMode::Bagging, 2).unwrap();
        for (ra, rb) in a.errors.iter().zip(&b.errors) {
            for (x, y) in ra.as_ref().unwrap().iter().zip(rb.as_ref().unwrap()) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn two_fold_average() {
        let d = sim(40, 5, 7);
        let parts = kfold_assignment(40, 2, 3).unwrap();
        let grid = [0, 10];
        let (t, _) = kfold_table(&d, &PredictorSpec::ridge(), &parts, &grid, 2, SamplingMode::Bagging, 1).unwrap();
        let mut expected = vec![0.0; 2];
        for (held, other) in [(0, 1), (1, 0)] {
            let train = d.select_rows(&parts[other]);
            let valid = d.select_rows(&parts[held]);
            let ens = fit_ensemble(&PredictorSpec::ridge(), &train, 10, 2, SamplingMode::Bagging, 1).unwrap();
            let r = prefix_mean_risks(&ens, valid.features().view(), valid.response().view()).unwrap();
            expected.iter_mut().zip(r).for_each(|(e, v)| *e += v / 2.0);
        }
        let got = t.errors[1].as_ref().unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12 * e);
        }
    }

    #[test]
    fn compare_report() {
        let train = sim(100, 6, 8);
        let test = sim(80, 6, 9);
        let ecv = EcvConfig {
            m0: 3,
            m_max: Some(4),
            seed: 1,
            ..EcvConfig::default()
        };
        let grid = build_grid(100, ecv.nu).unwrap();
        let baselines = [
            split(4, grid.clone()),
            BaselineSpec {
                method: BaselineMethod::KFold { folds: 3 },
                ..split(4, grid.clone())
            },
        ];
        let rep = compare(&train, &test, &PredictorSpec::ridge(), &ecv, &baselines, Metric::Nmse).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert_eq!(rep.rows[0].method, "ecv");
        assert!(rep.rows[0].suboptimality >= -1e-12);
        let fitted = grid.len() - 1;
        assert!(rep.rows[0].base_fits >= fitted * 3);
        assert!(rep.rows[1].base_fits >= fitted * 4);
        // three folds train on 66 or 67 rows
        let kfold_rows = grid.iter().filter(|&&k| k > 0 && k <= 66).count();
        assert!(rep.rows[2].base_fits >= 3 * kfold_rows * 4);
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("method,m_hat,k_hat,tune_seconds,test_nmse,suboptimality\n"));

        let again = compare(&train, &test, &PredictorSpec::ridge(), &ecv, &baselines, Metric::Nmse).unwrap();
        for (a, b) in rep.rows.iter().zip(&again.rows) {
            assert_eq!((a.m_hat, a.k_hat, a.test_nmse), (b.m_hat, b.k_hat, b.test_nmse));
        }

        let mismatched = [split(4, vec![0, 10])];
        assert!(compare(&train, &test, &PredictorSpec::ridge(), &ecv, &mismatched, Metric::Nmse).is_err());
    }
}
