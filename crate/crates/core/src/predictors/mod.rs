//! Base prediction procedures and the averaging ensemble built on them.

pub mod knn;
pub mod linear;
pub mod tree;

use ndarray::{Array1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{EcvError, Result};
use crate::rng::{substream, tag};
use crate::sampling::{draw_member_indices, SampleIndices, SamplingMode};

pub use self::knn::KnnRegressor;
pub use self::tree::{RegressionTree, TreeParams};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 0.1;
pub const DEFAULT_NEIGHBORS: usize = 5;
pub const DEFAULT_MIN_NODE_SIZE: usize = 5;
pub const DEFAULT_FEATURE_FRACTION: f64 = 1.0 / 3.0;

/// Base learner and its hyperparameters. Linear fits carry no intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PredictorSpec {
    /// Always predicts zero.
    Null,
    Ridge {
        lambda: f64,
    },
    Ridgeless,
    Knn {
        neighbors: usize,
    },
    Tree {
        min_node_size: usize,
        feature_fraction: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_depth: Option<usize>,
    },
}

impl PredictorSpec {
    pub fn ridge() -> Self {
        PredictorSpec::Ridge {
            lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }

    pub fn knn() -> Self {
        PredictorSpec::Knn {
            neighbors: DEFAULT_NEIGHBORS,
        }
    }

    /// Random-forest style tree: node size 5, a third of the features per split.
    pub fn forest_tree() -> Self {
        PredictorSpec::Tree {
            min_node_size: DEFAULT_MIN_NODE_SIZE,
            feature_fraction: DEFAULT_FEATURE_FRACTION,
            max_depth: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PredictorSpec::Ridge { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                Err(EcvError::invalid("ridge lambda must be positive"))
            }
            PredictorSpec::Knn { neighbors: 0 } => Err(EcvError::invalid("knn needs at least one neighbor")),
            PredictorSpec::Tree {
                min_node_size,
                feature_fraction,
                ..
            } => {
                if min_node_size == 0 {
                    Err(EcvError::invalid("min_node_size must be at least 1"))
                } else if !(feature_fraction > 0.0 && feature_fraction <= 1.0) {
                    Err(EcvError::invalid("feature_fraction must lie in (0, 1]"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PredictorSpec::Null => "null",
            PredictorSpec::Ridge { .. } => "ridge",
            PredictorSpec::Ridgeless => "ridgeless",
            PredictorSpec::Knn { .. } => "knn",
            PredictorSpec::Tree { .. } => "tree",
        }
    }
}

/// A fitted base predictor `f̂(·; D_I)`.
#[derive(Clone, Debug, PartialEq)]
pub enum FittedBase {
    Null { p: usize },
    Linear { coef: Array1<f64> },
    Knn(KnnRegressor),
    Tree { tree: RegressionTree, p: usize },
}

impl FittedBase {
    pub fn p(&self) -> usize {
        match self {
            FittedBase::Null { p } | FittedBase::Tree { p, .. } => *p,
            FittedBase::Linear { coef } => coef.len(),
            FittedBase::Knn(knn) => knn.p(),
        }
    }
}

/// Fits one base predictor on the rows drawn in `idx` (with multiplicity).
///
/// `rng` is consumed only by randomized learners (trees).
pub fn fit_base<R: Rng + ?Sized>(spec: &PredictorSpec, data: &Dataset, idx: &SampleIndices, rng: &mut R) -> Result<FittedBase> {
    spec.validate()?;
    if idx.n != data.n() {
        return Err(EcvError::DimensionMismatch {
            expected: data.n(),
            found: idx.n,
        });
    }
    if idx.draws.is_empty() {
        return Err(EcvError::invalid("cannot fit on an empty subsample"));
    }
    let p = data.p();
    Ok(match *spec {
        PredictorSpec::Null => FittedBase::Null { p },
        PredictorSpec::Ridge { lambda } => {
            let sub = data.select_rows(&idx.draws);
            FittedBase::Linear {
                coef: linear::ridge(sub.features().view(), sub.response().view(), lambda)?,
            }
        }
        PredictorSpec::Ridgeless => {
            let sub = data.select_rows(&idx.draws);
            FittedBase::Linear {
                coef: linear::ridgeless(sub.features().view(), sub.response().view())?,
            }
        }
        PredictorSpec::Knn { neighbors } => {
            if idx.draws.len() < neighbors {
                return Err(EcvError::invalid(format!(
                    "knn with {neighbors} neighbors needs k >= {neighbors}, got k={}",
                    idx.draws.len()
                )));
            }
            let sub = data.select_rows(&idx.draws);
            FittedBase::Knn(KnnRegressor::new(sub.features().clone(), sub.response().clone(), neighbors))
        }
        PredictorSpec::Tree {
            min_node_size,
            feature_fraction,
            max_depth,
        } => {
            let params = TreeParams {
                min_node_size,
                feature_fraction,
                max_depth,
            };
            let tree = RegressionTree::fit(data.features().view(), data.response().view(), &idx.draws, params, rng);
            FittedBase::Tree { tree, p }
        }
    })
}

pub fn predict_base(fitted: &FittedBase, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    if x.ncols() != fitted.p() {
        return Err(EcvError::DimensionMismatch {
            expected: fitted.p(),
            found: x.ncols(),
        });
    }
    Ok(match fitted {
        FittedBase::Null { .. } => Array1::zeros(x.nrows()),
        FittedBase::Linear { coef } => x.dot(coef),
        FittedBase::Knn(knn) => x.outer_iter().map(|row| knn.predict_one(row)).collect(),
        FittedBase::Tree { tree, .. } => x.outer_iter().map(|row| tree.predict_one(row)).collect(),
    })
}

/// Average of base predictors fitted on independent draws of the same `(n, k, mode)`.
///
/// Member `ℓ` is fully determined by `(seed, k, ℓ)`, so an ensemble of size
/// `M` is a prefix of any larger ensemble built with the same seed.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedEnsemble {
    pub spec: PredictorSpec,
    pub members: Vec<FittedBase>,
    pub indices: Vec<SampleIndices>,
    pub k: usize,
    pub mode: SamplingMode,
    pub seed: u64,
}

impl FittedEnsemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Keeps only the first `m` members.
    pub fn truncated(mut self, m: usize) -> Self {
        self.members.truncate(m);
        self.indices.truncate(m);
        self
    }

    /// Predictions of every member on `x`, in member order.
    pub fn member_predictions(&self, x: ArrayView2<'_, f64>) -> Result<Vec<Array1<f64>>> {
        self.members
            .par_iter()
            .map(|m| predict_base(m, x))
            .collect()
    }
}

fn fit_member(spec: &PredictorSpec, data: &Dataset, k: usize, member: usize, mode: SamplingMode, seed: u64) -> Result<(FittedBase, SampleIndices)> {
    let idx = draw_member_indices(data.n(), k, member, mode, seed)?;
    let mut rng = substream(seed, &[tag::FIT, k as u64, member as u64]);
    let fitted = fit_base(spec, data, &idx, &mut rng)?;
    Ok((fitted, idx))
}

fn fit_members(spec: &PredictorSpec, data: &Dataset, k: usize, range: std::ops::Range<usize>, mode: SamplingMode, seed: u64) -> Result<(Vec<FittedBase>, Vec<SampleIndices>)> {
    let fitted: Vec<(FittedBase, SampleIndices)> = range
        .into_par_iter()
        .map(|l| fit_member(spec, data, k, l, mode, seed))
        .collect::<Result<_>>()?;
    Ok(fitted.into_iter().unzip())
}

pub fn fit_ensemble(spec: &PredictorSpec, data: &Dataset, k: usize, m: usize, mode: SamplingMode, seed: u64) -> Result<FittedEnsemble> {
    spec.validate()?;
    if m == 0 {
        return Err(EcvError::invalid("ensemble size must be at least 1"));
    }
    if k == 0 || k > data.n() {
        return Err(EcvError::invalid(format!("subsample size k={k} must lie in [1, n={}]", data.n())));
    }
    let (members, indices) = fit_members(spec, data, k, 0..m, mode, seed)?;
    Ok(FittedEnsemble {
        spec: spec.clone(),
        members,
        indices,
        k,
        mode,
        seed,
    })
}

/// Mean of the first `use_first` members' predictions (all members when `None`).
pub fn predict_ensemble(ens: &FittedEnsemble, x: ArrayView2<'_, f64>, use_first: Option<usize>) -> Result<Array1<f64>> {
    let m = use_first.unwrap_or(ens.len());
    if m == 0 {
        return Err(EcvError::invalid("use_first must be at least 1"));
    }
    if m > ens.len() {
        return Err(EcvError::invalid(format!(
            "use_first={m} exceeds ensemble size {}",
            ens.len()
        )));
    }
    let preds: Vec<Array1<f64>> = ens.members[..m]
        .par_iter()
        .map(|member| predict_base(member, x))
        .collect::<Result<_>>()?;
    let mut acc = Array1::zeros(x.nrows());
    for p in &preds {
        acc += p;
    }
    Ok(acc / m as f64)
}

/// Appends `extra` members, continuing the substream keys from the current size.
pub fn extend_ensemble(ens: FittedEnsemble, data: &Dataset, extra: usize) -> Result<FittedEnsemble> {
    if extra == 0 {
        return Err(EcvError::invalid("extend by at least one member"));
    }
    let start = ens.len();
    let (members, indices) = fit_members(&ens.spec, data, ens.k, start..start + extra, ens.mode, ens.seed)?;
    let mut ens = ens;
    ens.members.extend(members);
    ens.indices.extend(indices);
    Ok(ens)
}

#[cfg(test)]
mod tests;
