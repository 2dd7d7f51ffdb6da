//! Closed-form optimality-gap bound for the federated round loop.
//!
//! The distance to the optimum contracts geometrically and picks up a
//! per-round noise floor. With `aₜ = E‖Υₜ − Υ*‖²`,
//!
//! ```text
//! aₜ₊₁ ≤ f₁(λₜ)·aₜ + f₂(λₜ)
//! f₁(λ) = 1 − δ₂λ(ϑ_th − λ(ϑ_th − 1))
//! f₂(λ) = (M+1−N)λ²ϑ²Γ²/(NM)                    — partial participation
//!       + 2λ(ϑ−1)Λ                               — local/global divergence
//!       + (1+δ₂(1−λ))λ²Γ²·ϑ(ϑ−1)(2ϑ−1)/6          — multi-step drift
//!       + λ²(ϑ²+ϑ−1)Γ²                            — gradient variance
//! ```
//!
//! and by smoothness the loss gap obeys `loss(Υₜ) − loss* ≤ (δ₁/2)·aₜ`.
//! The step size must satisfy `0 ≤ λ ≤ min(1, 1/(δ₁ϑ_th))`; within that
//! range `f₁ ∈ [1 − δ₂λϑ_th, 1] ⊆ [0, 1]`, so the recursion never
//! amplifies. A schedule of all zeros is legal and freezes the bound at
//! its initial value.
//!
//! [`hessian_extreme_eigenvalues`] calibrates `δ₁`/`δ₂` from the pooled
//! quadratic's curvature; Γ and Λ are magnitude bounds the caller
//! measures or asserts.

use ndarray::Array2;

use super::FlError;
use crate::data::Dataset;

/// Inputs to the gap recursion. See the module docs for the roles.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceBoundParams {
    /// Smoothness constant δ₁ (largest curvature).
    pub delta1: f64,
    /// Strong-convexity floor δ₂ (smallest curvature), 0 < δ₂ ≤ δ₁.
    pub delta2: f64,
    /// Gradient-norm bound Γ along the trajectory.
    pub gamma: f64,
    /// Local/global gradient-divergence bound Λ.
    pub lambda_div: f64,
    /// Local steps per round ϑ ≥ 1.
    pub vartheta: f64,
    /// Step threshold ϑ_th ≥ 1 in the contraction factor.
    pub vartheta_th: f64,
    /// Total data holders M.
    pub m_total: usize,
    /// Holders reporting per round N, 1 ≤ N ≤ M.
    pub n_participants: usize,
    /// Initial squared distance ‖Υ₀ − Υ*‖².
    pub gap0_sq: f64,
}

impl ConvergenceBoundParams {
    /// Largest admissible step size: `min(1, 1/(δ₁·ϑ_th))`.
    pub fn max_step(&self) -> f64 {
        (1.0 / (self.delta1 * self.vartheta_th)).min(1.0)
    }

    fn validate(&self) -> Result<(), FlError> {
        let bad = |msg: String| Err(FlError::BadBoundParams(msg));
        if !(self.delta2 > 0.0 && self.delta2.is_finite()) || self.delta1 < self.delta2 {
            return bad(format!(
                "need 0 < delta2 <= delta1 (got delta1={}, delta2={})",
                self.delta1, self.delta2
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be finite and >= 0 (got {})", self.gamma));
        }
        if !(self.lambda_div >= 0.0 && self.lambda_div.is_finite()) {
            return bad(format!(
                "lambda_div must be finite and >= 0 (got {})",
                self.lambda_div
            ));
        }
        if !(self.vartheta >= 1.0) || !(self.vartheta_th >= 1.0) {
            return bad(format!(
                "step counts must be >= 1 (got vartheta={}, vartheta_th={})",
                self.vartheta, self.vartheta_th
            ));
        }
        if self.n_participants == 0 || self.n_participants > self.m_total {
            return bad(format!(
                "need 1 <= n_participants <= m_total (got {}/{})",
                self.n_participants, self.m_total
            ));
        }
        if !(self.gap0_sq >= 0.0 && self.gap0_sq.is_finite()) {
            return bad(format!("gap0_sq must be finite and >= 0 (got {})", self.gap0_sq));
        }
        Ok(())
    }
}

fn f1(p: &ConvergenceBoundParams, lam: f64) -> f64 {
    1.0 - p.delta2 * lam * (p.vartheta_th - lam * (p.vartheta_th - 1.0))
}

fn f2(p: &ConvergenceBoundParams, lam: f64) -> f64 {
    let g2 = p.gamma * p.gamma;
    let vt = p.vartheta;
    let straggler_term = (p.m_total + 1 - p.n_participants) as f64 * lam * lam * vt * vt * g2
        / (p.n_participants as f64 * p.m_total as f64);
    let divergence_term = 2.0 * lam * (vt - 1.0) * p.lambda_div;
    let drift_term = (1.0 + p.delta2 * (1.0 - lam)) * lam * lam * g2 * vt * (vt - 1.0)
        * (2.0 * vt - 1.0)
        / 6.0;
    let variance_term = lam * lam * (vt * vt + vt - 1.0) * g2;
    straggler_term + divergence_term + drift_term + variance_term
}

/// Runs the gap recursion for a step-size schedule and returns the loss
/// bound after each round: element `t` bounds the gap at round `t`, so
/// the result has `schedule.len() + 1` entries, starting at
/// `(δ₁/2)·gap₀²`.
pub fn convergence_bound(
    params: &ConvergenceBoundParams,
    schedule: &[f64],
) -> Result<Vec<f64>, FlError> {
    params.validate()?;
    let max_step = params.max_step();
    let mut a = params.gap0_sq;
    let mut out = Vec::with_capacity(schedule.len() + 1);
    out.push(0.5 * params.delta1 * a);
    for &lam in schedule {
        if !lam.is_finite() || lam < 0.0 || lam > max_step {
            return Err(FlError::BadStepSize {
                value: lam,
                max: max_step,
            });
        }
        let contraction = f1(params, lam);
        debug_assert!((0.0..=1.0).contains(&contraction));
        a = contraction * a + f2(params, lam);
        out.push(0.5 * params.delta1 * a);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Curvature calibration
// ---------------------------------------------------------------------------

/// The pooled quadratic's Hessian `(1/n)·FᵀF` — the curvature every
/// label column shares.
pub fn pooled_hessian(ds: &Dataset) -> Array2<f64> {
    ds.features().t().dot(ds.features()) / ds.n_samples() as f64
}

/// Extreme eigenvalues `(min, max)` of a symmetric positive
/// semi-definite matrix, via power iteration plus a spectral shift.
/// Deterministic: the start vector is fixed.
pub fn hessian_extreme_eigenvalues(h: &Array2<f64>) -> Result<(f64, f64), FlError> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(FlError::BadBoundParams(format!(
            "matrix must be square and non-empty (got {}x{})",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(FlError::BadBoundParams(
            "matrix has non-finite entries".to_string(),
        ));
    }
    let lambda_max = power_iteration(h);
    // Largest eigenvalue of (λmax·I − H) is λmax − λmin.
    let mut shifted = -h.clone();
    for i in 0..n {
        shifted[(i, i)] += lambda_max;
    }
    let spread = power_iteration(&shifted);
    let lambda_min = (lambda_max - spread).max(0.0);
    Ok((lambda_min, lambda_max))
}

fn power_iteration(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    // Fixed pseudo-random start vector so no eigenvector is missed by an
    // unlucky orthogonal start.
    let mut state = 0x243f_6a88_85a3_08d3u64;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        })
        .collect();
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = norm(&v);
    if nv == 0.0 {
        return 0.0;
    }
    v.iter_mut().for_each(|a| *a /= nv);
    let mut eig = 0.0f64;
    for _ in 0..10_000 {
        let mut w = vec![0.0f64; n];
        for (r, wr) in w.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..n {
                acc += m[(r, c)] * v[c];
            }
            *wr = acc;
        }
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        w.iter_mut().for_each(|a| *a /= nw);
        v = w;
        if (next - eig).abs() <= 1e-13 * next.abs().max(1.0) {
            return next;
        }
        eig = next;
    }
    eig
}
