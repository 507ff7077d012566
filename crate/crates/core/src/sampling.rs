//! Subsample index draws for bagging and subagging.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EcvError, Result};
use crate::rng::{substream, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// `k` draws with replacement.
    Bagging,
    /// `k` distinct rows without replacement.
    Subagging,
}

impl std::str::FromStr for SamplingMode {
    type Err = EcvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bagging" | "with-replacement" => Ok(SamplingMode::Bagging),
            "subagging" | "without-replacement" => Ok(SamplingMode::Subagging),
            other => Err(EcvError::invalid(format!("unknown sampling mode '{other}'"))),
        }
    }
}

/// One draw `I` of size `k` out of `n` rows together with its out-of-bag complement.
///
/// Row ids are zero-based. `draws` is sorted and keeps multiplicity under
/// bagging; `distinct` and `oob` partition `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleIndices {
    pub draws: Vec<usize>,
    pub distinct: Vec<usize>,
    pub oob: Vec<usize>,
    pub n: usize,
    pub k: usize,
}

impl SampleIndices {
    /// Builds the record from a sorted multiset of draws.
    fn from_sorted_draws(n: usize, draws: Vec<usize>) -> Self {
        let k = draws.len();
        let mut distinct = draws.clone();
        distinct.dedup();
        let mut in_bag = vec![false; n];
        for &i in &distinct {
            in_bag[i] = true;
        }
        let oob = (0..n).filter(|&i| !in_bag[i]).collect();
        Self {
            draws,
            distinct,
            oob,
            n,
            k,
        }
    }

    /// Membership mask over `0..n` for the distinct in-bag rows.
    pub fn in_bag_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &i in &self.distinct {
            mask[i] = true;
        }
        mask
    }
}

/// Uniform draw of `k` out of `n` rows under `mode`.
pub fn draw_indices<R: Rng + ?Sized>(n: usize, k: usize, mode: SamplingMode, rng: &mut R) -> Result<SampleIndices> {
    if k == 0 || k > n {
        return Err(EcvError::invalid(format!("subsample size k={k} must lie in [1, n={n}]")));
    }
    let mut draws: Vec<usize> = match mode {
        SamplingMode::Bagging => (0..k).map(|_| rng.random_range(0..n)).collect(),
        SamplingMode::Subagging => index::sample(rng, n, k).into_vec(),
    };
    draws.sort_unstable();
    Ok(SampleIndices::from_sorted_draws(n, draws))
}

/// Rows out of bag for both draws: `[n] \ (a ∪ b)`.
pub fn pair_union_oob(a: &SampleIndices, b: &SampleIndices) -> Result<Vec<usize>> {
    if a.n != b.n {
        return Err(EcvError::invalid(format!(
            "draws come from different parents (n={} vs n={})",
            a.n, b.n
        )));
    }
    let mut out = Vec::with_capacity(a.oob.len().min(b.oob.len()));
    let (mut i, mut j) = (0, 0);
    // sorted-list intersection of the two complements
    while i < a.oob.len() && j < b.oob.len() {
        match a.oob[i].cmp(&b.oob[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a.oob[i]);
                i += 1;
                j += 1;
            }
        }
    }
    Ok(out)
}

/// Draw `ℓ` (zero-based) of the ensemble at subsample size `k`.
///
/// The substream depends only on `(master_seed, k, ℓ)`, so any prefix of an
/// ensemble can be regenerated or extended independently.
pub fn draw_member_indices(n: usize, k: usize, member: usize, mode: SamplingMode, master_seed: u64) -> Result<SampleIndices> {
    let mut rng = substream(master_seed, &[tag::DRAW, k as u64, member as u64]);
    draw_indices(n, k, mode, &mut rng)
}

pub fn draw_ensemble_indices(n: usize, k: usize, m: usize, mode: SamplingMode, master_seed: u64) -> Result<Vec<SampleIndices>> {
    if m == 0 {
        return Err(EcvError::invalid("ensemble size must be at least 1"));
    }
    (0..m)
        .map(|l| draw_member_indices(n, k, l, mode, master_seed))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OverlapSummary {
    pub mean_overlap: f64,
    /// Unbiased sample variance over trials.
    pub var_overlap: f64,
    pub trials: usize,
}

/// Monte-Carlo distribution of the overlap `|I₁ ∩ I₂|` between independent draws.
///
/// Under bagging the overlap counts how many of `I₂`'s `k` draws land in the
/// distinct rows of `I₁`.
pub fn overlap_stats(n: usize, k: usize, mode: SamplingMode, trials: usize, seed: u64) -> Result<OverlapSummary> {
    if trials == 0 {
        return Err(EcvError::invalid("trials must be at least 1"));
    }
    let mut rng = substream(seed, &[tag::OVERLAP, n as u64, k as u64]);
    let mut mask = vec![false; n];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let a = draw_indices(n, k, mode, &mut rng)?;
        let b = draw_indices(n, k, mode, &mut rng)?;
        for &i in &a.distinct {
            mask[i] = true;
        }
        let hits = b.draws.iter().filter(|&&i| mask[i]).count() as f64;
        for &i in &a.distinct {
            mask[i] = false;
        }
        sum += hits;
        sum_sq += hits * hits;
    }
    let t = trials as f64;
    let mean = sum / t;
    let var = if trials > 1 {
        (sum_sq - t * mean * mean) / (t - 1.0)
    } else {
        0.0
    };
    Ok(OverlapSummary {
        mean_overlap: mean,
        var_overlap: var.max(0.0),
        trials,
    })
}
