//! Plaintext loss and gradient for the shared linear model.
//!
//! The model is a `d × k` weight matrix Υ mapping features to labels.
//! On a block with `n` samples the objective is mean squared error with
//! a ½ factor:
//!
//! ```text
//! loss(Υ)  = 1/(2n) · ‖FΥ − L‖²_F
//! grad(Υ)  = 1/n    · Fᵀ(FΥ − L)
//! ```
//!
//! Two identities the training loop leans on (and tests pin down):
//! equal-sized blocks average to the pooled loss exactly, and
//! sample-count-weighted block gradients sum to the pooled gradient.

use ndarray::Array2;

use super::FlError;
use crate::data::Dataset;

/// Mean squared error (with ½ factor) of `model` on a block.
///
/// Panics if the model's row count differs from the feature dimension —
/// shapes are fixed once per run and checked at loop entry.
pub fn local_loss(ds: &Dataset, model: &Array2<f64>) -> f64 {
    let resid = ds.features().dot(model) - ds.labels();
    let sq_sum: f64 = resid.iter().map(|v| v * v).sum();
    sq_sum / (2.0 * ds.n_samples() as f64)
}

/// Mean gradient of [`local_loss`] on a block: `(1/n)·Fᵀ(FΥ − L)`.
pub fn local_gradient(ds: &Dataset, model: &Array2<f64>) -> Array2<f64> {
    gradient_sum(ds, model) / ds.n_samples() as f64
}

/// Un-normalized gradient `Fᵀ(FΥ − L)` — the sum over samples. Weighted
/// aggregation works on this form: block sums add up to the pooled sum.
pub fn gradient_sum(ds: &Dataset, model: &Array2<f64>) -> Array2<f64> {
    let resid = ds.features().dot(model) - ds.labels();
    ds.features().t().dot(&resid)
}

/// Solves the normal equations `(FᵀF)Υ = FᵀL` by Gaussian elimination
/// with partial pivoting — the exact minimizer of the pooled loss, used
/// as the reference optimum when calibrating convergence bounds.
pub fn least_squares_fit(ds: &Dataset) -> Result<Array2<f64>, FlError> {
    let gram = ds.features().t().dot(ds.features());
    let rhs = ds.features().t().dot(ds.labels());
    solve_linear(&gram, &rhs)
}

/// Dense linear solve `A·X = B` (A square) with partial pivoting.
pub(crate) fn solve_linear(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>, FlError> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.nrows(), n);
    let k = b.ncols();
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| m[(r1, col)].abs().total_cmp(&m[(r2, col)].abs()))
            .expect("non-empty range");
        if m[(pivot_row, col)].abs() < 1e-12 {
            return Err(FlError::SingularSystem);
        }
        if pivot_row != col {
            for j in 0..n {
                m.swap((col, j), (pivot_row, j));
            }
            for j in 0..k {
                x.swap((col, j), (pivot_row, j));
            }
        }
        let pivot = m[(col, col)];
        for row in col + 1..n {
            let factor = m[(row, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                m[(row, j)] -= factor * m[(col, j)];
            }
            for j in 0..k {
                x[(row, j)] -= factor * x[(col, j)];
            }
        }
    }
    for col in (0..n).rev() {
        for j in 0..k {
            let mut acc = x[(col, j)];
            for r in col + 1..n {
                acc -= m[(col, r)] * x[(r, j)];
            }
            x[(col, j)] = acc / m[(col, col)];
        }
    }
    Ok(x)
}
