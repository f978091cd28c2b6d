//! Closed-form finite-sample bound calculators.
//!
//! Everything here is a pure function of [`BoundInputs`]. Exponentials of `α`
//! are evaluated in log space, so large norm products give `+∞` (a vacuous
//! bound) instead of `NaN`.

use serde::{Deserialize, Serialize};

use super::stencil::optimal_step;
use crate::error::{NicaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Bound on `‖x‖₂`.
    pub c_x: f64,
    /// Bound on `‖u‖₂`.
    pub c_u: f64,
    /// Per-layer Frobenius norm bounds `B_i`.
    pub layer_norms: Vec<f64>,
    pub dim: usize,
    pub num_layers: usize,
    pub n: usize,
    pub delta: f64,
    /// Function-class mismatch.
    pub nu: f64,
    /// Bound on the fourth derivatives of the regression error.
    pub c_t: f64,
    /// Smallest singular value of the variability matrix.
    pub sigma_star: f64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        BoundInputs {
            c_x: 1.0,
            c_u: 1.0,
            layer_norms: vec![1.0; 4],
            dim: 2,
            num_layers: 4,
            n: 10_000,
            delta: 0.05,
            nu: 0.0,
            c_t: 10.0,
            sigma_star: 1.0,
        }
    }
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(NicaError::invalid(format!("{name} must be finite and non-negative, got {v}")))
            }
        };
        finite_nonneg("C_x", self.c_x)?;
        finite_nonneg("C_u", self.c_u)?;
        finite_nonneg("nu", self.nu)?;
        finite_nonneg("sigma_star", self.sigma_star)?;
        for &b in &self.layer_norms {
            finite_nonneg("B_i", b)?;
        }
        if self.dim == 0 || self.num_layers == 0 || self.n == 0 {
            return Err(NicaError::invalid("D, L and N must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(NicaError::invalid(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.c_t > 0.0 && self.c_t.is_finite()) {
            return Err(NicaError::invalid("C_t must be positive"));
        }
        Ok(())
    }

    pub fn norm_product(&self) -> f64 {
        self.layer_norms.iter().product()
    }
}

/// `log(1 + e^α)` without overflow.
fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

/// `(C_x ∏B_i + √D C_u) · ∏B_i · √(DL/N)`.
pub fn rademacher_bound(inputs: &BoundInputs) -> f64 {
    let prod = inputs.norm_product();
    let d = inputs.dim as f64;
    (inputs.c_x * prod + d.sqrt() * inputs.c_u) * prod * (d * inputs.num_layers as f64 / inputs.n as f64).sqrt()
}

/// `α = (√D C_x ∏B_i + D C_u) · ∏B_i`, an upper bound on `|r(z)|`.
pub fn alpha_bound(inputs: &BoundInputs) -> f64 {
    let prod = inputs.norm_product();
    let d = inputs.dim as f64;
    (d.sqrt() * inputs.c_x * prod + d * inputs.c_u) * prod
}

/// Restricted strong convexity modulus `e^α / (1 + e^α)²` of the logistic
/// loss on `|r| ≤ α`.
pub fn rsc_constant(alpha: f64) -> f64 {
    let a = alpha.abs();
    let e = (-a).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// `2𝔑_N + ν + 5·log(1+e^α)·√(2 ln(8/δ)/N)`.
fn risk_bracket(inputs: &BoundInputs, rademacher: f64, alpha: f64) -> f64 {
    let c = softplus(alpha);
    2.0 * rademacher + inputs.nu + 5.0 * c * (2.0 * (8.0 / inputs.delta).ln() / inputs.n as f64).sqrt()
}

/// `ε = (1+e^α)²/e^α · (2𝔑_N + ν + 5c√(2 ln(8/δ)/N))` with `c = log(1+e^α)`.
pub fn generalization_gap_bound(inputs: &BoundInputs, rademacher: f64) -> f64 {
    let alpha = alpha_bound(inputs);
    let log_prefactor = 2.0 * softplus(alpha) - alpha;
    log_prefactor.exp() * risk_bracket(inputs, rademacher, alpha)
}

/// `2D√(3C_t)(1+e^α)^{1/2} / (3e^{α/4}σ*²) · (2𝔑_N + ν + 5c√(2 ln(8/δ)/N))^{1/4}`.
pub fn recovery_bound(inputs: &BoundInputs, rademacher: f64) -> Result<f64> {
    if !(inputs.sigma_star > 0.0) {
        return Err(NicaError::VariabilityFailure);
    }
    let alpha = alpha_bound(inputs);
    let d = inputs.dim as f64;
    let log_factor = 0.5 * softplus(alpha) - 0.25 * alpha;
    let prefactor = 2.0 * d * (3.0 * inputs.c_t).sqrt() * log_factor.exp() / (3.0 * inputs.sigma_star.powi(2));
    Ok(prefactor * risk_bracket(inputs, rademacher, alpha).powf(0.25))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub rademacher: f64,
    pub alpha: f64,
    pub gamma_alpha: f64,
    /// `c = log(1 + e^α)`.
    pub c: f64,
    pub epsilon: f64,
    pub optimal_step: f64,
    pub recovery: f64,
    pub note: String,
}

impl BoundReport {
    pub fn compute(inputs: &BoundInputs) -> Result<Self> {
        inputs.validate()?;
        let rademacher = rademacher_bound(inputs);
        let alpha = alpha_bound(inputs);
        let epsilon = generalization_gap_bound(inputs, rademacher);
        Ok(BoundReport {
            inputs: inputs.clone(),
            rademacher,
            alpha,
            gamma_alpha: rsc_constant(alpha),
            c: softplus(alpha),
            epsilon,
            optimal_step: optimal_step(epsilon, inputs.c_t)?,
            recovery: recovery_bound(inputs, rademacher)?,
            note: "conditional on supplied constants (C_t, sigma_star, nu)".into(),
        })
    }
}
