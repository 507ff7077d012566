//! Out-of-bag risk components and their extrapolation in the ensemble size.
//!
//! For squared loss the risk of an `M`-ensemble is exactly
//! `−(1 − 2/M)·a₁ + 2(1 − 1/M)·a₂`, where `a₁` is the average single-member
//! risk and `a₂` the average risk of member pairs. Estimating `a₁` and `a₂`
//! from OOB rows (`r1`, `r2`) therefore gives an estimate for every `M`,
//! including the infinite-ensemble limit `2·r2 − r1`.

use std::fmt;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{EcvError, Result};
use crate::predictors::{fit_ensemble, predict_base, FittedBase, FittedEnsemble, PredictorSpec};
use crate::rng::{substream, tag};
use crate::sampling::SamplingMode;

/// How OOB squared errors are aggregated into one risk estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum Centering {
    /// Arithmetic mean.
    Avg,
    /// Median of `B = ⌈8·a·ln n⌉` block means (confidence level `η = n^{−a}`).
    Mom { a: f64 },
}

impl Default for Centering {
    fn default() -> Self {
        Centering::Avg
    }
}

impl Centering {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Centering::Mom { a } if !(a > 0.0 && a.is_finite()) => {
                Err(EcvError::invalid("median-of-means exponent must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Ensemble size used for extrapolation; `Infinite` is the `M → ∞` limit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnsembleSize {
    Finite(usize),
    Infinite,
}

impl fmt::Display for EnsembleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnsembleSize::Finite(m) => write!(f, "{m}"),
            EnsembleSize::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for EnsembleSize {
    type Err = EcvError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") {
            return Ok(EnsembleSize::Infinite);
        }
        match s.parse::<usize>() {
            Ok(m) if m >= 1 => Ok(EnsembleSize::Finite(m)),
            _ => Err(EcvError::invalid(format!("ensemble size '{s}' must be a positive integer or 'inf'"))),
        }
    }
}

impl Serialize for EnsembleSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EnsembleSize::Finite(m) => s.serialize_u64(*m as u64),
            EnsembleSize::Infinite => s.serialize_str("inf"),
        }
    }
}

/// Pair of OOB risk estimates at one subsample size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskComponents {
    /// Estimated 1-ensemble risk.
    pub r1: f64,
    /// Estimated 2-ensemble risk.
    pub r2: f64,
    pub k: usize,
    pub m0: usize,
    /// Smallest and mean OOB set size over the member pairs that were used.
    pub oob_min: usize,
    pub oob_mean: f64,
    /// Member pairs skipped because their joint OOB set was empty.
    pub skipped_pairs: usize,
}

/// `(y_i − f̂(x_i))²` over `oob_rows`.
pub fn oob_squared_errors(member: &FittedBase, data: &Dataset, oob_rows: &[usize]) -> Result<Vec<f64>> {
    if oob_rows.is_empty() {
        return Err(EcvError::OobExhausted("no out-of-bag rows".into()));
    }
    let sub = data.select_rows(oob_rows);
    let pred = predict_base(member, sub.features().view())?;
    Ok(pred
        .iter()
        .zip(sub.response().iter())
        .map(|(p, y)| (y - p) * (y - p))
        .collect())
}

/// Number of median-of-means blocks for `len` errors out of a sample of `n`.
pub fn mom_blocks(a: f64, n: usize, len: usize) -> usize {
    let b = (8.0 * a * (n.max(1) as f64).ln()).ceil();
    let b = if b.is_finite() && b > 0.0 { b as usize } else { 1 };
    b.min(len / 2).max(1)
}

/// Aggregates squared errors by mean or by median of block means.
///
/// For `Mom` the errors are randomly permuted and cut into contiguous blocks
/// whose sizes differ by at most one.
pub fn center<R: Rng + ?Sized>(errors: &[f64], spec: &Centering, n: usize, rng: &mut R) -> f64 {
    assert!(!errors.is_empty(), "centering needs at least one error");
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    match *spec {
        Centering::Avg => mean(errors),
        Centering::Mom { a } => {
            let blocks = mom_blocks(a, n, errors.len());
            if blocks == 1 {
                return mean(errors);
            }
            let mut shuffled = errors.to_vec();
            shuffled.shuffle(rng);
            let (base, extra) = (shuffled.len() / blocks, shuffled.len() % blocks);
            let mut means = Vec::with_capacity(blocks);
            let mut start = 0;
            for b in 0..blocks {
                let len = base + usize::from(b < extra);
                means.push(mean(&shuffled[start..start + len]));
                start += len;
            }
            median(&mut means)
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// OOB predictions of one member, stored densely with `NaN` for in-bag rows.
fn oob_prediction_table(member: &FittedBase, data: &Dataset, oob: &[usize]) -> Result<Vec<f64>> {
    let mut table = vec![f64::NAN; data.n()];
    if oob.is_empty() {
        return Ok(table);
    }
    let sub = data.select_rows(oob);
    let pred = predict_base(member, sub.features().view())?;
    for (&i, &v) in oob.iter().zip(pred.iter()) {
        table[i] = v;
    }
    Ok(table)
}

/// Estimates `(r1, r2)` from an ensemble fitted on `data`.
///
/// `r1` averages each member's centered OOB error; `r2` averages, over
/// unordered member pairs, the centered error of the pair mean on rows out of
/// bag for both. Pairs with no shared OOB row are skipped. Centering draws use
/// substreams keyed by `(seed, k)`.
pub fn estimate_components(ens: &FittedEnsemble, data: &Dataset, centering: &Centering, seed: u64) -> Result<RiskComponents> {
    centering.validate()?;
    let m0 = ens.len();
    if m0 < 2 {
        return Err(EcvError::invalid("component estimation needs at least two members"));
    }
    let n = data.n();
    if ens.indices.iter().any(|idx| idx.n != n) {
        return Err(EcvError::invalid("ensemble was not fitted on this dataset"));
    }
    let k = ens.k as u64;
    let y = data.response();

    let tables: Vec<Vec<f64>> = ens
        .members
        .par_iter()
        .zip(ens.indices.par_iter())
        .map(|(member, idx)| oob_prediction_table(member, data, &idx.oob))
        .collect::<Result<_>>()?;

    let singles: Vec<Option<f64>> = (0..m0)
        .into_par_iter()
        .map(|l| {
            let oob = &ens.indices[l].oob;
            if oob.is_empty() {
                return None;
            }
            let errors: Vec<f64> = oob.iter().map(|&i| (y[i] - tables[l][i]).powi(2)).collect();
            let mut rng = substream(seed, &[tag::CENTER, k, 0, l as u64]);
            Some(center(&errors, centering, n, &mut rng))
        })
        .collect();
    let singles: Vec<f64> = singles.into_iter().flatten().collect();
    if singles.is_empty() {
        return Err(EcvError::OobExhausted(format!("every member at k={k} has an empty OOB set")));
    }
    let r1 = singles.iter().sum::<f64>() / singles.len() as f64;

    let pairs: Vec<(usize, usize)> = (0..m0).flat_map(|l| (l + 1..m0).map(move |m| (l, m))).collect();
    let pair_stats: Vec<Option<(f64, usize)>> = pairs
        .par_iter()
        .enumerate()
        .map(|(pi, &(l, m))| {
            let (a, b) = (&tables[l], &tables[m]);
            let errors: Vec<f64> = (0..n)
                .filter(|&i| !a[i].is_nan() && !b[i].is_nan())
                .map(|i| (y[i] - 0.5 * (a[i] + b[i])).powi(2))
                .collect();
            if errors.is_empty() {
                return None;
            }
            let mut rng = substream(seed, &[tag::CENTER, k, 1, pi as u64]);
            Some((center(&errors, centering, n, &mut rng), errors.len()))
        })
        .collect();

    let used: Vec<(f64, usize)> = pair_stats.iter().flatten().copied().collect();
    let skipped_pairs = pairs.len() - used.len();
    if used.is_empty() {
        return Err(EcvError::OobExhausted(format!(
            "all {} member pairs at k={k} share no out-of-bag row",
            pairs.len()
        )));
    }
    let r2 = used.iter().map(|u| u.0).sum::<f64>() / used.len() as f64;
    let oob_min = used.iter().map(|u| u.1).min().unwrap_or(0);
    let oob_mean = used.iter().map(|u| u.1 as f64).sum::<f64>() / used.len() as f64;

    Ok(RiskComponents {
        r1,
        r2,
        k: ens.k,
        m0,
        oob_min,
        oob_mean,
        skipped_pairs,
    })
}

/// `−(1 − 2/M)·r1 + 2(1 − 1/M)·r2`; the `M → ∞` limit is `2·r2 − r1`.
pub fn extrapolate_pair(r1: f64, r2: f64, m: EnsembleSize) -> f64 {
    match m {
        EnsembleSize::Finite(1) => r1,
        EnsembleSize::Finite(2) => r2,
        EnsembleSize::Finite(m) => {
            let inv = 1.0 / m as f64;
            -(1.0 - 2.0 * inv) * r1 + 2.0 * (1.0 - inv) * r2
        }
        EnsembleSize::Infinite => 2.0 * r2 - r1,
    }
}

pub fn extrapolate(rc: &RiskComponents, m: EnsembleSize) -> f64 {
    extrapolate_pair(rc.r1, rc.r2, m)
}

/// Both sides of the squared-risk decomposition evaluated on one dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Decomposition {
    /// Empirical risk of the `M`-prefix ensemble.
    pub lhs: f64,
    /// `−(1 − 2/M)·a₁ + 2(1 − 1/M)·a₂` from single-member and ordered-pair risks.
    pub rhs: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Decomposition {
    pub fn relative_gap(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.lhs.abs().max(1e-12)
    }
}

/// Evaluates the ensemble-risk decomposition on `eval` for the first `m` members.
pub fn decomposition_oracle(ens: &FittedEnsemble, eval: &Dataset, m: usize) -> Result<Decomposition> {
    if m < 2 {
        return Err(EcvError::invalid("decomposition needs M >= 2"));
    }
    if ens.len() < m {
        return Err(EcvError::invalid(format!("ensemble has {} members, need {m}", ens.len())));
    }
    if eval.n() == 0 {
        return Err(EcvError::invalid("evaluation set is empty"));
    }
    let x = eval.features().view();
    let y = eval.response().view();
    let preds: Vec<Array1<f64>> = ens.members[..m]
        .iter()
        .map(|member| predict_base(member, x))
        .collect::<Result<_>>()?;
    let risk = |p: ArrayView1<'_, f64>| crate::dataset::mse(p, y);

    let a1 = preds.iter().map(|p| risk(p.view())).sum::<f64>() / m as f64;
    let mut a2 = 0.0;
    for l in 0..m {
        for j in 0..m {
            if l != j {
                let pair = (&preds[l] + &preds[j]) * 0.5;
                a2 += risk(pair.view());
            }
        }
    }
    a2 /= (m * (m - 1)) as f64;
    let mut mean = Array1::zeros(eval.n());
    for p in &preds {
        mean += p;
    }
    mean /= m as f64;
    let lhs = risk(mean.view());
    let rhs = extrapolate_pair(a1, a2, EnsembleSize::Finite(m));
    Ok(Decomposition { lhs, rhs, a1, a2 })
}

/// One grid row of the risk surface. `k = 0` is the null predictor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub k: usize,
    pub components: Option<RiskComponents>,
    /// Why `components` is missing, when it is.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub missing: Option<String>,
}

/// Extrapolated risk estimates over a grid of subsample sizes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RiskSurface {
    /// Training mean of `y²`, the estimated risk of the zero predictor.
    pub null_risk: f64,
    pub m0: usize,
    pub rows: Vec<SurfaceRow>,
}

/// One `(k, M)` cell of the long-format surface table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurfaceEntry {
    pub k: usize,
    pub m: EnsembleSize,
    pub estimate: f64,
    pub oob_min: usize,
    pub oob_mean: f64,
    pub skipped_pairs: usize,
}

impl RiskSurface {
    /// Estimate at `(k, M)`; `None` for missing rows or unknown `k`.
    pub fn estimate(&self, k: usize, m: EnsembleSize) -> Option<f64> {
        let row = self.rows.iter().find(|r| r.k == k)?;
        row_estimate(row, self.null_risk, m)
    }

    /// Long table over every non-missing row and each requested `M`.
    pub fn table(&self, sizes: &[EnsembleSize]) -> Vec<SurfaceEntry> {
        let mut out = Vec::new();
        for row in &self.rows {
            for &m in sizes {
                let Some(estimate) = row_estimate(row, self.null_risk, m) else {
                    continue;
                };
                let (oob_min, oob_mean, skipped_pairs) = row
                    .components
                    .as_ref()
                    .map_or((0, 0.0, 0), |c| (c.oob_min, c.oob_mean, c.skipped_pairs));
                out.push(SurfaceEntry {
                    k: row.k,
                    m,
                    estimate,
                    oob_min,
                    oob_mean,
                    skipped_pairs,
                });
            }
        }
        out
    }

    /// CSV with columns `k,M,estimate,oob_min,oob_mean,skipped_pairs`.
    pub fn write_csv(&self, path: impl AsRef<Path>, sizes: &[EnsembleSize]) -> Result<()> {
        let path = path.as_ref();
        let mut file = std::fs::File::create(path).map_err(|e| EcvError::io(path, e))?;
        let mut text = String::from("k,M,estimate,oob_min,oob_mean,skipped_pairs\n");
        for e in self.table(sizes) {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.k,
                e.m,
                crate::fmt_f64(e.estimate),
                e.oob_min,
                crate::fmt_f64(e.oob_mean),
                e.skipped_pairs
            ));
        }
        file.write_all(text.as_bytes()).map_err(|e| EcvError::io(path, e))
    }
}

fn row_estimate(row: &SurfaceRow, null_risk: f64, m: EnsembleSize) -> Option<f64> {
    if row.k == 0 {
        return Some(null_risk);
    }
    row.components.as_ref().map(|c| extrapolate(c, m))
}

/// Fits `M₀`-ensembles at every grid size and estimates their risk components.
///
/// Each fitted ensemble is handed to `keep` together with its surface row, so
/// callers can retain the ones they need without holding all of them.
pub(crate) fn build_surface<F>(
    data: &Dataset,
    spec: &PredictorSpec,
    grid: &[usize],
    m0: usize,
    mode: SamplingMode,
    centering: &Centering,
    seed: u64,
    mut keep: F,
) -> Result<RiskSurface>
where
    F: FnMut(&SurfaceRow, FittedEnsemble),
{
    if m0 < 2 {
        return Err(EcvError::invalid("M0 must be at least 2"));
    }
    centering.validate()?;
    let mut rows = Vec::with_capacity(grid.len());
    for &k in grid {
        if k == 0 {
            rows.push(SurfaceRow {
                k,
                components: None,
                missing: None,
            });
            continue;
        }
        let ens = fit_ensemble(spec, data, k, m0, mode, seed)?;
        let row = match estimate_components(&ens, data, centering, seed) {
            Ok(c) => SurfaceRow {
                k,
                components: Some(c),
                missing: None,
            },
            Err(EcvError::OobExhausted(msg)) => SurfaceRow {
                k,
                components: None,
                missing: Some(msg),
            },
            Err(e) => return Err(e),
        };
        keep(&row, ens);
        rows.push(row);
    }
    Ok(RiskSurface {
        null_risk: data.null_risk(),
        m0,
        rows,
    })
}

/// Extrapolated risk estimates over `grid`; rows whose OOB sets run out are marked missing.
pub fn risk_surface(
    data: &Dataset,
    spec: &PredictorSpec,
    grid: &[usize],
    m0: usize,
    mode: SamplingMode,
    centering: &Centering,
    seed: u64,
) -> Result<RiskSurface> {
    build_surface(data, spec, grid, m0, mode, centering, seed, |_, _| {})
}
