//! Datasets, CSV interchange and the synthetic regression models.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EcvError, Result};
use crate::linalg;
use crate::rng::{substream, tag};

/// Number of leading eigenvectors averaged into the signal direction.
pub const SIGNAL_RANK: usize = 5;

/// Feature matrix and response with matching row counts; every entry finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    response: Array1<f64>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, response: Array1<f64>) -> Result<Self> {
        if features.nrows() != response.len() {
            return Err(EcvError::DimensionMismatch {
                expected: features.nrows(),
                found: response.len(),
            });
        }
        if features.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(EcvError::invalid("dataset contains non-finite values"));
        }
        Ok(Self { features, response })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn response(&self) -> &Array1<f64> {
        &self.response
    }

    /// Rows in the given order; repeated ids are repeated.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            response: rows.iter().map(|&i| self.response[i]).collect(),
        }
    }

    /// Mean of squared responses: the risk of the predictor that always outputs zero.
    pub fn null_risk(&self) -> f64 {
        self.response.iter().map(|y| y * y).sum::<f64>() / self.n() as f64
    }

    /// Writes `x1..xp,y` with a header row and 17 significant digits per value.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| EcvError::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_csv_to(&mut out).map_err(|e| EcvError::io(path, e))?;
        out.flush().map_err(|e| EcvError::io(path, e))
    }

    fn write_csv_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.p())
            .map(|j| format!("x{j}"))
            .chain(std::iter::once("y".to_string()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (row, y) in self.features.outer_iter().zip(self.response.iter()) {
            let mut line: Vec<String> = row.iter().map(|&v| crate::fmt_f64(v)).collect();
            line.push(crate::fmt_f64(*y));
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticModel {
    /// `y = xᵀβ + ε`
    Linear,
    /// `y = xᵀβ + (xᵀβ)² − tr(Σ)/p + ε`
    Quad,
    /// `y = tanh(xᵀβ) + ε`
    Tanh,
}

impl std::str::FromStr for SyntheticModel {
    type Err = EcvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "m1" => Ok(SyntheticModel::Linear),
            "quad" | "m2" => Ok(SyntheticModel::Quad),
            "tanh" | "m3" => Ok(SyntheticModel::Tanh),
            other => Err(EcvError::invalid(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub model: SyntheticModel,
    pub n: usize,
    pub p: usize,
    pub rho_ar: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.p < 1 {
            return Err(EcvError::invalid("n and p must be at least 1"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(EcvError::invalid("sigma must be finite and non-negative"));
        }
        if !(self.rho_ar.abs() < 1.0) {
            return Err(EcvError::invalid("|rho_ar| must be below 1"));
        }
        Ok(())
    }
}

/// AR(1) covariance `Σ_ij = ρ^|i−j|`.
pub fn ar1_covariance(p: usize, rho: f64) -> Result<Array2<f64>> {
    if p < 1 {
        return Err(EcvError::invalid("p must be at least 1"));
    }
    if !(rho.abs() < 1.0) {
        return Err(EcvError::invalid(format!("|rho| must be below 1, got {rho}")));
    }
    Ok(Array2::from_shape_fn((p, p), |(i, j)| rho.powi(i.abs_diff(j) as i32)))
}

/// Average of the unit eigenvectors belonging to the five largest eigenvalues.
///
/// Eigenvectors are sign-normalized (first nonzero coordinate positive) and
/// equal eigenvalues keep the solver's index order, so the result is
/// deterministic.
pub fn signal_beta(sigma: &Array2<f64>) -> Result<Array1<f64>> {
    let p = sigma.nrows();
    if p < SIGNAL_RANK {
        return Err(EcvError::invalid(format!(
            "signal direction needs p >= {SIGNAL_RANK}, got {p}"
        )));
    }
    let eig = linalg::symmetric_eigen(sigma.view())?;
    Ok(signal_from_eigen(&eig))
}

fn signal_from_eigen(eig: &linalg::SortedEigen) -> Array1<f64> {
    eig.vectors
        .slice(ndarray::s![.., ..SIGNAL_RANK])
        .sum_axis(Axis(1))
        / SIGNAL_RANK as f64
}

fn model_response(model: SyntheticModel, signal: f64, trace_ratio: f64) -> f64 {
    match model {
        SyntheticModel::Linear => signal,
        SyntheticModel::Quad => signal + (signal * signal - trace_ratio),
        SyntheticModel::Tanh => signal.tanh(),
    }
}

/// Draws `n` i.i.d. rows from the configured model with `x = Σ^{1/2} z`.
pub fn simulate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.p < SIGNAL_RANK {
        return Err(EcvError::invalid(format!(
            "synthetic models need p >= {SIGNAL_RANK}, got {}",
            spec.p
        )));
    }
    let sigma = ar1_covariance(spec.p, spec.rho_ar)?;
    let eig = linalg::symmetric_eigen(sigma.view())?;
    let root = linalg::symmetric_sqrt(&eig);
    let beta = signal_from_eigen(&eig);
    let trace_ratio = sigma.diag().sum() / spec.p as f64;

    let mut rng = substream(spec.seed, &[tag::SIMULATE]);
    let z = Array2::from_shape_simple_fn((spec.n, spec.p), || rng.sample::<f64, _>(StandardNormal));
    // rows are x_iᵀ = z_iᵀ Σ^{1/2} since the root is symmetric
    let x = z.dot(&root);
    let signal = x.dot(&beta);
    let response = signal
        .iter()
        .map(|&s| {
            let eps: f64 = rng.sample(StandardNormal);
            model_response(spec.model, s, trace_ratio) + spec.sigma * eps
        })
        .collect();
    Dataset::new(x, response)
}

/// Which CSV column holds the response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    Index(usize),
    Last,
}

impl std::str::FromStr for ResponseColumn {
    type Err = EcvError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("last") {
            Ok(ResponseColumn::Last)
        } else if let Ok(i) = s.parse::<usize>() {
            Ok(ResponseColumn::Index(i))
        } else {
            Ok(ResponseColumn::Name(s.to_string()))
        }
    }
}

/// Reads a comma-separated numeric table.
///
/// `Index` is zero-based. Row numbers in errors are 1-based data rows (the
/// header, if any, is not counted).
pub fn load_csv(path: impl AsRef<Path>, response: &ResponseColumn, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| EcvError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header: Option<Vec<String>> = if has_header {
        let h = reader.headers().map_err(|e| csv_error(path, e))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let mut values = Vec::with_capacity(record.len());
        for (c, cell) in record.iter().enumerate() {
            let column = header
                .as_ref()
                .and_then(|h| h.get(c).cloned())
                .unwrap_or_else(|| c.to_string());
            let v: f64 = cell.parse().map_err(|_| EcvError::Parse {
                row: r + 1,
                column: column.clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(EcvError::Parse {
                    row: r + 1,
                    column,
                    message: format!("'{cell}' is not finite"),
                });
            }
            values.push(v);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(EcvError::Parse {
            row: 0,
            column: String::new(),
            message: format!("{} has no data rows", path.display()),
        });
    }
    let width = rows[0].len();
    let target = match response {
        ResponseColumn::Last => width - 1,
        ResponseColumn::Index(i) => *i,
        ResponseColumn::Name(name) => header
            .as_ref()
            .ok_or_else(|| EcvError::invalid("response column by name needs a header row"))?
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EcvError::invalid(format!("response column '{name}' not found")))?,
    };
    if target >= width {
        return Err(EcvError::invalid(format!(
            "response column index {target} out of range for {width} columns"
        )));
    }
    if width < 2 {
        return Err(EcvError::invalid("need at least one feature column besides the response"));
    }

    let n = rows.len();
    let mut features = Array2::zeros((n, width - 1));
    let mut y = Array1::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        let mut col = 0;
        for (j, &v) in row.iter().enumerate() {
            if j == target {
                y[i] = v;
            } else {
                features[[i, col]] = v;
                col += 1;
            }
        }
    }
    Dataset::new(features, y)
}

fn csv_error(path: &Path, err: csv::Error) -> EcvError {
    match err.kind() {
        csv::ErrorKind::Io(_) => match err.into_kind() {
            csv::ErrorKind::Io(io) => EcvError::io(path, io),
            _ => unreachable!(),
        },
        _ => EcvError::Parse {
            row: err.position().map_or(0, |p| p.record() as usize),
            column: String::new(),
            message: err.to_string(),
        },
    }
}

/// Random disjoint partition into `(train, test)` with `⌊n·test_fraction⌋` test rows.
///
/// Both parts keep the original row order.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(EcvError::invalid("test_fraction must lie in (0, 1)"));
    }
    let n = data.n();
    let n_test = (n as f64 * test_fraction).floor() as usize;
    if n_test == 0 || n_test == n {
        return Err(EcvError::invalid(format!(
            "split of {n} rows at fraction {test_fraction} leaves an empty part"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut substream(seed, &[tag::SPLIT]));
    let mut test: Vec<usize> = perm[..n_test].to_vec();
    let mut train: Vec<usize> = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((data.select_rows(&train), data.select_rows(&test)))
}

/// Mean squared error divided by the population variance of `truth`.
pub fn nmse(predictions: ArrayView1<'_, f64>, truth: ArrayView1<'_, f64>) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(EcvError::DimensionMismatch {
            expected: truth.len(),
            found: predictions.len(),
        });
    }
    if truth.len() < 2 {
        return Err(EcvError::invalid("nmse needs at least two points"));
    }
    let n = truth.len() as f64;
    let mean = truth.sum() / n;
    let var = truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(EcvError::DivisionByZero("truth has zero variance".into()));
    }
    Ok(mse(predictions, truth) / var)
}

pub fn mse(predictions: ArrayView1<'_, f64>, truth: ArrayView1<'_, f64>) -> f64 {
    predictions
        .iter()
        .zip(truth.iter())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / truth.len() as f64
}
