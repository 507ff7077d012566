use ndarray::{Array1, Array2, ArrayView1};

/// k-nearest-neighbour regressor over a stored subsample.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnRegressor {
    x: Array2<f64>,
    y: Array1<f64>,
    neighbors: usize,
}

impl KnnRegressor {
    /// `neighbors` must not exceed the number of stored rows; the caller checks.
    pub(crate) fn new(x: Array2<f64>, y: Array1<f64>, neighbors: usize) -> Self {
        debug_assert!(neighbors >= 1 && neighbors <= y.len());
        Self { x, y, neighbors }
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Mean response of the nearest stored rows in Euclidean distance.
    /// Equal distances are resolved by stored-row position.
    pub fn predict_one(&self, query: ArrayView1<'_, f64>) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .outer_iter()
            .enumerate()
            .map(|(i, row)| {
                let d = row
                    .iter()
                    .zip(query.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d, i)
            })
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.neighbors < dist.len() {
            dist.select_nth_unstable_by(self.neighbors - 1, order);
        }
        dist[..self.neighbors].iter().map(|&(_, i)| self.y[i]).sum::<f64>() / self.neighbors as f64
    }
}
