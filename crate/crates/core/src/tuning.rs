//! End-to-end selection of the subsample size `k` and ensemble size `M`.

use std::path::Path;

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::baselines::ValidationTable;
use crate::dataset::Dataset;
use crate::error::{EcvError, Result};
use crate::predictors::{extend_ensemble, predict_ensemble, FittedEnsemble, PredictorSpec};
use crate::risk::{build_surface, extrapolate, extrapolate_pair, Centering, EnsembleSize, RiskComponents, RiskSurface};
use crate::sampling::SamplingMode;

/// Rule turning `(r1, r2)` at the selected `k` into an ensemble size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Extrapolated risk within `δ` of the infinite ensemble.
    #[default]
    Additive,
    /// Extrapolated risk within a factor `1 + δ` of the infinite ensemble.
    Multiplicative,
}

impl std::str::FromStr for Selection {
    type Err = EcvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "additive" => Ok(Selection::Additive),
            "multiplicative" => Ok(Selection::Multiplicative),
            _ => Err(EcvError::invalid(format!("unknown selection rule '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcvConfig {
    /// Grid unit is `⌊n^nu⌋`.
    pub nu: f64,
    /// Members fitted per grid point.
    pub m0: usize,
    pub delta: f64,
    pub centering: Centering,
    pub mode: SamplingMode,
    /// Largest affordable ensemble; switches on the budget rules.
    pub m_max: Option<usize>,
    /// Enables the to-bag test with this factor.
    pub zeta: Option<f64>,
    pub selection: Selection,
    /// Divide risks by the null risk before choosing `M`, making `δ` relative.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for EcvConfig {
    fn default() -> Self {
        Self {
            nu: 0.5,
            m0: 20,
            delta: 0.05,
            centering: Centering::Avg,
            mode: SamplingMode::Bagging,
            m_max: None,
            zeta: None,
            selection: Selection::Additive,
            normalize: false,
            seed: 0,
        }
    }
}

impl EcvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(EcvError::invalid("nu must lie in (0, 1)"));
        }
        if self.m0 < 2 {
            return Err(EcvError::invalid("m0 must be at least 2"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(EcvError::invalid("delta must be positive"));
        }
        if self.m_max == Some(0) {
            return Err(EcvError::invalid("m_max must be at least 1"));
        }
        if let Some(z) = self.zeta {
            if !(z > 0.0 && z.is_finite()) {
                return Err(EcvError::invalid("zeta must be positive"));
            }
        }
        self.centering.validate()
    }

    /// Column of the surface minimized over `k`.
    pub fn target(&self) -> EnsembleSize {
        self.m_max.map_or(EnsembleSize::Infinite, EnsembleSize::Finite)
    }
}

/// `{0, k₀, 2k₀, …}` up to `n(1 − 1/ln n)`, with `k₀ = ⌊n^nu⌋`.
pub fn build_grid(n: usize, nu: f64) -> Result<Vec<usize>> {
    if n < 3 {
        return Err(EcvError::invalid(format!("grid needs n >= 3, got {n}")));
    }
    if !(nu > 0.0 && nu < 1.0) {
        return Err(EcvError::invalid("nu must lie in (0, 1)"));
    }
    let nf = n as f64;
    let raw = nf.powf(nu);
    let near = raw.round();
    let k0 = if (raw - near).abs() <= 1e-9 * raw { near } else { raw.floor() } as usize;
    if k0 == 0 {
        return Err(EcvError::invalid("grid unit floor(n^nu) is zero"));
    }
    let cap = nf * (1.0 - 1.0 / nf.ln());
    let steps = (cap / k0 as f64).floor() as usize;
    Ok((0..=steps).map(|j| j * k0).collect())
}

/// Smallest `k` attaining the minimum; `None` values are skipped.
pub fn select_k(values: &[(usize, Option<f64>)]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(k, v) in values {
        let Some(v) = v else { continue };
        let better = match best {
            None => true,
            Some((bk, bv)) => v < bv || (v == bv && k < bk),
        };
        if better {
            best = Some((k, v));
        }
    }
    best.map(|b| b.0)
        .ok_or_else(|| EcvError::TuningFailed("every grid row is missing".into()))
}

fn tolerance(delta: f64, n: usize) -> f64 {
    delta.max(1.0 / (n.max(1) as f64).sqrt())
}

fn ceil_count(x: f64) -> usize {
    if x.is_nan() || x <= 1.0 {
        1
    } else if x >= usize::MAX as f64 {
        usize::MAX
    } else {
        x.ceil() as usize
    }
}

/// `⌈2(r1 − r2) / max{δ, n^{−1/2}}⌉`, at least one.
pub fn select_m_additive(r1: f64, r2: f64, delta: f64, n: usize) -> usize {
    ceil_count(2.0 * (r1 - r2) / tolerance(delta, n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MSelection {
    pub m_hat: usize,
    pub budget_clipped: bool,
    pub multiplicative_fallback: bool,
}

/// `⌈2(r1 − r2) / (max{δ, n^{−1/2}}·(2r2 − r1))⌉`; falls back to the additive
/// rule when the estimated infinite-ensemble risk is not positive.
pub fn select_m_multiplicative(r1: f64, r2: f64, delta: f64, n: usize) -> MSelection {
    let limit = 2.0 * r2 - r1;
    if limit <= 1e-12 * r1.max(1.0) {
        return MSelection {
            m_hat: select_m_additive(r1, r2, delta, n),
            budget_clipped: false,
            multiplicative_fallback: true,
        };
    }
    MSelection {
        m_hat: ceil_count(2.0 * (r1 - r2) / (tolerance(delta, n) * limit)),
        budget_clipped: false,
        multiplicative_fallback: false,
    }
}

/// Smallest `M` whose extrapolated risk is within tolerance of the `m_max`
/// ensemble: `⌈2(r1 − r2) / (max{δ, n^{−1/2}} + R̂_{m_max} − R̂_∞)⌉` in `[1, m_max]`.
pub fn select_m_budget(r1: f64, r2: f64, delta: f64, n: usize, m_max: usize) -> MSelection {
    assert!(m_max >= 1, "m_max must be at least 1");
    let gap = extrapolate_pair(r1, r2, EnsembleSize::Finite(m_max)) - extrapolate_pair(r1, r2, EnsembleSize::Infinite);
    let raw = if r1 <= r2 {
        1
    } else {
        ceil_count(2.0 * (r1 - r2) / (tolerance(delta, n) + gap))
    };
    MSelection {
        m_hat: raw.min(m_max),
        budget_clipped: raw > m_max,
        multiplicative_fallback: false,
    }
}

/// Outcome of the to-bag test with both sides of its inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ToBagVerdict {
    pub bag: bool,
    pub null_risk: f64,
    pub best_r1: f64,
    pub best_rmmax: f64,
    /// `best_r1 − best_rmmax`, the gain from ensembling.
    pub lhs: f64,
    /// `ζ·(null_risk − best_r1)`, the gain from subsampling alone scaled by `ζ`.
    pub rhs: f64,
}

pub fn should_bag(null_risk: f64, best_r1: f64, best_rmmax: f64, zeta: f64) -> ToBagVerdict {
    let lhs = best_r1 - best_rmmax;
    let rhs = zeta * (null_risk - best_r1);
    ToBagVerdict {
        bag: null_risk < best_r1 || lhs > rhs,
        null_risk,
        best_r1,
        best_rmmax,
        lhs,
        rhs,
    }
}

/// The predictor returned by a tuning method, refitted on the full training set.
#[derive(Clone, Debug, PartialEq)]
pub enum TunedPredictor {
    /// Predicts zero (selected `k = 0`).
    Null { p: usize },
    Ensemble(FittedEnsemble),
}

impl TunedPredictor {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        match self {
            TunedPredictor::Null { p } => {
                if x.ncols() != *p {
                    return Err(EcvError::DimensionMismatch {
                        expected: *p,
                        found: x.ncols(),
                    });
                }
                Ok(Array1::zeros(x.nrows()))
            }
            TunedPredictor::Ensemble(ens) => predict_ensemble(ens, x, None),
        }
    }

    pub fn ensemble(&self) -> Option<&FittedEnsemble> {
        match self {
            TunedPredictor::Ensemble(e) => Some(e),
            TunedPredictor::Null { .. } => None,
        }
    }
}

/// Risk table a method selected from.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Surface {
    Extrapolated(RiskSurface),
    Validation(ValidationTable),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub method: String,
    pub grid: Vec<usize>,
    pub k_hat: usize,
    pub m_hat: usize,
    /// The method's own risk estimate at `(k_hat, m_hat)`.
    pub estimated_risk: f64,
    pub surface: Surface,
    pub to_bag: Option<ToBagVerdict>,
    pub budget_clipped: bool,
    pub multiplicative_fallback: bool,
    /// Base predictors fitted during tuning and refitting.
    pub base_fits: usize,
    pub predictor: TunedPredictor,
}

#[derive(Serialize)]
struct Summary<'a> {
    method: &'a str,
    k_hat: usize,
    m_hat: usize,
    estimated_risk: f64,
    budget_clipped: bool,
    multiplicative_fallback: bool,
    to_bag: Option<ToBagVerdict>,
    base_fits: usize,
    grid: &'a [usize],
    surface: &'a Surface,
}

impl TuneResult {
    /// Selection trace and surface as pretty JSON.
    pub fn summary_json(&self) -> Result<String> {
        let summary = Summary {
            method: &self.method,
            k_hat: self.k_hat,
            m_hat: self.m_hat,
            estimated_risk: self.estimated_risk,
            budget_clipped: self.budget_clipped,
            multiplicative_fallback: self.multiplicative_fallback,
            to_bag: self.to_bag,
            base_fits: self.base_fits,
            grid: &self.grid,
            surface: &self.surface,
        };
        Ok(serde_json::to_string_pretty(&summary)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.summary_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| EcvError::io(path, e))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.predictor.predict(x)
    }
}

struct Kept {
    value: f64,
    ens: FittedEnsemble,
    comps: RiskComponents,
}

fn keep_if_better(slot: &mut Option<Kept>, value: f64, row_comps: &RiskComponents, ens: &FittedEnsemble) {
    if slot.as_ref().is_none_or(|s| value < s.value) {
        *slot = Some(Kept {
            value,
            ens: ens.clone(),
            comps: row_comps.clone(),
        });
    }
}

/// Runs extrapolated cross-validation and returns the tuned, refitted ensemble.
///
/// `M₀`-ensembles are fitted at every grid size; only the ones that can be
/// selected are retained. The final ensemble reuses the first `min(M̂, M₀)`
/// members at `k̂` and is extended when `M̂ > M₀`.
pub fn ecv_tune(data: &Dataset, spec: &PredictorSpec, cfg: &EcvConfig) -> Result<TuneResult> {
    cfg.validate()?;
    spec.validate()?;
    let n = data.n();
    let grid = build_grid(n, cfg.nu)?;
    let target = cfg.target();

    let mut by_target: Option<Kept> = None;
    let mut by_r1: Option<Kept> = None;
    let surface = build_surface(data, spec, &grid, cfg.m0, cfg.mode, &cfg.centering, cfg.seed, |row, ens| {
        if let Some(c) = &row.components {
            keep_if_better(&mut by_target, extrapolate(c, target), c, &ens);
            if cfg.zeta.is_some() {
                keep_if_better(&mut by_r1, c.r1, c, &ens);
            }
        }
    })?;

    let fitted_rows = surface.rows.iter().filter(|r| r.k > 0).count();
    let mut base_fits = fitted_rows * cfg.m0;
    let values: Vec<(usize, Option<f64>)> = grid.iter().map(|&k| (k, surface.estimate(k, target))).collect();
    let k_hat = select_k(&values)?;

    let base = TuneResult {
        method: "ecv".into(),
        grid: grid.clone(),
        k_hat,
        m_hat: 1,
        estimated_risk: surface.null_risk,
        surface: Surface::Extrapolated(surface.clone()),
        to_bag: None,
        budget_clipped: false,
        multiplicative_fallback: false,
        base_fits,
        predictor: TunedPredictor::Null { p: data.p() },
    };
    if k_hat == 0 {
        return Ok(base);
    }
    let chosen = by_target.expect("a non-null k was selected");
    debug_assert_eq!(chosen.ens.k, k_hat);

    let to_bag = cfg.zeta.map(|zeta| {
        let best_r1 = by_r1.as_ref().map_or(f64::INFINITY, |b| b.value);
        should_bag(surface.null_risk, best_r1, chosen.value, zeta)
    });
    if let Some(verdict) = to_bag.filter(|v| !v.bag) {
        let single = by_r1.expect("to-bag verdict needs a fitted row");
        return Ok(TuneResult {
            k_hat: single.ens.k,
            estimated_risk: single.comps.r1,
            to_bag: Some(verdict),
            predictor: TunedPredictor::Ensemble(single.ens.truncated(1)),
            ..base
        });
    }

    let scale = if cfg.normalize && surface.null_risk > 0.0 {
        1.0 / surface.null_risk
    } else {
        1.0
    };
    let (r1, r2) = (chosen.comps.r1 * scale, chosen.comps.r2 * scale);
    let pick = match (cfg.m_max, cfg.selection) {
        (Some(m_max), _) => select_m_budget(r1, r2, cfg.delta, n, m_max),
        (None, Selection::Additive) => MSelection {
            m_hat: select_m_additive(r1, r2, cfg.delta, n),
            budget_clipped: false,
            multiplicative_fallback: false,
        },
        (None, Selection::Multiplicative) => select_m_multiplicative(r1, r2, cfg.delta, n),
    };

    let m_hat = pick.m_hat;
    let ens = if m_hat <= chosen.ens.len() {
        chosen.ens.truncated(m_hat)
    } else {
        let extra = m_hat - chosen.ens.len();
        base_fits += extra;
        extend_ensemble(chosen.ens, data, extra)?
    };
    Ok(TuneResult {
        m_hat,
        estimated_risk: extrapolate(&chosen.comps, EnsembleSize::Finite(m_hat)),
        to_bag,
        budget_clipped: pick.budget_clipped,
        multiplicative_fallback: pick.multiplicative_fallback,
        base_fits,
        predictor: TunedPredictor::Ensemble(ens),
        ..base
    })
}

/// Tunes the tree feature fraction first, then `(k, M)` at the chosen fraction.
///
/// Each candidate fraction is scored by the estimated risk of its own tuned
/// ensemble; ties keep the earlier candidate.
pub fn tune_feature_fraction(data: &Dataset, spec: &PredictorSpec, fractions: &[f64], cfg: &EcvConfig) -> Result<(f64, TuneResult)> {
    let PredictorSpec::Tree {
        min_node_size,
        max_depth,
        ..
    } = *spec
    else {
        return Err(EcvError::invalid("feature fraction tuning needs a tree predictor"));
    };
    if fractions.is_empty() {
        return Err(EcvError::invalid("no feature fractions to try"));
    }
    let mut best: Option<(f64, TuneResult)> = None;
    for &feature_fraction in fractions {
        let candidate = PredictorSpec::Tree {
            min_node_size,
            feature_fraction,
            max_depth,
        };
        let result = ecv_tune(data, &candidate, cfg)?;
        if best.as_ref().is_none_or(|(_, b)| result.estimated_risk < b.estimated_risk) {
            best = Some((feature_fraction, result));
        }
    }
    Ok(best.expect("fractions is non-empty"))
}
