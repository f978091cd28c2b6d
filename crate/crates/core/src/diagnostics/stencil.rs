use crate::error::{NicaError, Result};

/// Four-point central estimate of `∂²f/∂x∂y`:
///
/// `[f(x+Δx,y+Δy) − f(x+Δx,y−Δy) − f(x−Δx,y+Δy) + f(x−Δx,y−Δy)] / (4ΔxΔy)`.
///
/// Exact for bilinear `f`; truncation error is `O(Δx² + Δy²)`.
pub fn cross_derivative_stencil<F>(f: F, x: f64, y: f64, dx: f64, dy: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    if !(dx > 0.0 && dy > 0.0) {
        return Err(NicaError::invalid(format!("stencil steps must be positive, got ({dx}, {dy})")));
    }
    let corner = |cx: f64, cy: f64| -> Result<f64> {
        let v = f(cx, cy);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(NicaError::NonFiniteStencil { x: cx, y: cy })
        }
    };
    let pp = corner(x + dx, y + dy)?;
    let pm = corner(x + dx, y - dy)?;
    let mp = corner(x - dx, y + dy)?;
    let mm = corner(x - dx, y - dy)?;
    Ok(((pp - pm) - (mp - mm)) / (4.0 * dx * dy))
}

/// Step rule `Δy* = (36√ε / C_t)^{1/4}` for equal steps `Δy_j = Δy_k`.
pub fn optimal_step(eps: f64, c_t: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(NicaError::invalid(format!("epsilon must be non-negative, got {eps}")));
    }
    if !(c_t > 0.0) {
        return Err(NicaError::invalid(format!("C_t must be positive, got {c_t}")));
    }
    Ok((36.0 * eps.sqrt() / c_t).powf(0.25))
}

/// [`optimal_step`] floored at `1e-4 · scale`, so a vanishing `ε` never
/// produces a step dominated by cancellation.
pub fn floored_step(eps: f64, c_t: f64, scale: f64) -> Result<f64> {
    Ok(optimal_step(eps, c_t)?.max(1e-4 * scale.abs()))
}
