//! CART regression trees with per-node feature subsampling.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    pub min_node_size: usize,
    pub feature_fraction: f64,
    pub max_depth: Option<usize>,
}

impl TreeParams {
    /// Candidate features per node: `⌈feature_fraction · p⌉`, at least one.
    pub fn features_per_node(&self, p: usize) -> usize {
        ((self.feature_fraction * p as f64).ceil() as usize).clamp(1, p)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

struct Builder<'a, R: ?Sized> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    params: TreeParams,
    mtry: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl RegressionTree {
    /// Grows a tree on `rows` of `(x, y)`; repeated rows count with multiplicity.
    pub fn fit<R: Rng + ?Sized>(
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        rows: &[usize],
        params: TreeParams,
        rng: &mut R,
    ) -> Self {
        assert!(!rows.is_empty(), "tree needs at least one row");
        let mtry = params.features_per_node(x.ncols());
        let mut builder = Builder {
            x,
            y,
            params,
            mtry,
            rng,
            nodes: Vec::new(),
            scratch: Vec::with_capacity(rows.len()),
        };
        let mut rows = rows.to_vec();
        builder.grow(&mut rows, 0);
        RegressionTree { nodes: builder.nodes }
    }

    pub fn predict_one(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_of(&self, row: ArrayView1<'_, f64>) -> usize {
        let mut at = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[at]
        {
            at = if row[feature] <= threshold { left } else { right };
        }
        at
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let (sum, sum_sq) = rows.iter().fold((0.0, 0.0), |(s, q), &i| {
            let v = self.y[i];
            (s + v, q + v * v)
        });
        let m = rows.len() as f64;
        let mean = sum / m;
        self.nodes.push(Node::Leaf(mean));

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || rows.len() < 2 * self.params.min_node_size {
            return id;
        }
        let parent_sse = (sum_sq - sum * mean).max(0.0);
        if parent_sse <= 1e-12 * sum_sq.max(1.0) {
            return id;
        }
        let Some(best) = self.best_split(rows, sum) else {
            return id;
        };
        // Σy²/n_l + Σy²/n_r must beat the parent's Σ²/n by a relative margin
        let gain = best.score - sum * mean;
        if gain <= 1e-12 * parent_sse.max(f64::MIN_POSITIVE) {
            return id;
        }

        let mut lo = 0;
        for i in 0..rows.len() {
            if self.x[[rows[i], best.feature]] <= best.threshold {
                rows.swap(lo, i);
                lo += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(lo);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Maximizes `S_l²/n_l + S_r²/n_r`, which minimizes the children's summed squared deviations.
    /// Candidate features are scanned in ascending index and thresholds in ascending value, and
    /// only strict improvements replace the incumbent.
    fn best_split(&mut self, rows: &[usize], total: f64) -> Option<BestSplit> {
        let p = self.x.ncols();
        let mut features = index::sample(self.rng, p, self.mtry).into_vec();
        features.sort_unstable();
        let min_leaf = self.params.min_node_size.max(1);
        let m = rows.len();
        let mut best: Option<BestSplit> = None;

        for &f in &features {
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&i| (self.x[[i, f]], self.y[i])));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if self.scratch[0].0 == self.scratch[m - 1].0 {
                continue;
            }
            let mut left_sum = 0.0;
            for i in 1..m {
                left_sum += self.scratch[i - 1].1;
                if i < min_leaf || m - i < min_leaf {
                    continue;
                }
                let (lo, hi) = (self.scratch[i - 1].0, self.scratch[i].0);
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / i as f64 + right_sum * right_sum / (m - i) as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        score,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }
}
