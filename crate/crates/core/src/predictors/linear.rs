//! Ridge and ridgeless (minimum-norm least squares) fits without intercept.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::Result;
use crate::linalg;

/// Ridge coefficients minimizing `‖y − Xβ‖² / k + λ‖β‖²`, with `k` the row count.
///
/// Uses the `p × p` normal equations when `k ≥ p` and the equivalent `k × k`
/// dual system `β = Xᵀ(XXᵀ/k + λI)⁻¹ y/k` otherwise.
pub fn ridge(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, lambda: f64) -> Result<Array1<f64>> {
    let (k, p) = x.dim();
    let kf = k as f64;
    if k >= p {
        let mut gram = x.t().dot(&x) / kf;
        add_diagonal(&mut gram, lambda);
        let rhs = x.t().dot(&y) / kf;
        linalg::spd_solve(gram.view(), rhs.view())
    } else {
        let mut gram = x.dot(&x.t()) / kf;
        add_diagonal(&mut gram, lambda);
        let rhs = &y / kf;
        let alpha = linalg::spd_solve(gram.view(), rhs.view())?;
        Ok(x.t().dot(&alpha))
    }
}

/// Minimum-ℓ₂-norm least-squares coefficients.
pub fn ridgeless(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    linalg::min_norm_lstsq(x, y)
}

fn add_diagonal(a: &mut Array2<f64>, value: f64) {
    for d in a.diag_mut() {
        *d += value;
    }
}
