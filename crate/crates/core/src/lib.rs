//! Extrapolated cross-validation (ECV) for randomized ensembles.
//!
//! Bagged and subagged predictors are averages of base predictors fitted on
//! random subsamples of size `k`. The squared risk of an `M`-ensemble is an
//! affine function of `1/M` whose two coefficients are fixed by the 1- and
//! 2-ensemble risks. Estimating those two risks from out-of-bag (OOB)
//! observations therefore yields risk estimates for every ensemble size at
//! once, which is what [`tuning::ecv_tune`] uses to pick `(k, M)` without
//! sample splitting.
//!
//! Module map:
//! - [`dataset`]: data model, CSV I/O, synthetic generators.
//! - [`sampling`]: index draws for bagging/subagging and OOB bookkeeping.
//! - [`predictors`]: base learners and the ensemble combiner.
//! - [`risk`]: OOB risk components, centering, extrapolation.
//! - [`tuning`]: grid construction and `(k, M)` selection.
//! - [`baselines`]: sample-split and K-fold CV over the same grid.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod predictors;
pub mod risk;
pub mod rng;
pub mod sampling;
pub mod tuning;

mod linalg;

pub use ndarray;

pub use crate::dataset::{Dataset, SyntheticModel, SyntheticSpec};
pub use crate::error::{EcvError, Result};
pub use crate::predictors::{FittedBase, FittedEnsemble, PredictorSpec};
pub use crate::risk::{Centering, EnsembleSize, RiskComponents, RiskSurface};
pub use crate::sampling::{SampleIndices, SamplingMode};
pub use crate::tuning::{EcvConfig, Selection, TuneResult, TunedPredictor};

/// Formats a float with 17 significant digits so that text output round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}
