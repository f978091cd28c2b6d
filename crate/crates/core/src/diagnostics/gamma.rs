//! Cross-derivative identifiability metric `γ_jk`.
//!
//! `γ_jk = [∂²v_1/∂y_j∂y_k, …, ∂²v_D/∂y_j∂y_k]` for the composed inverse
//! `v = g⁻¹ ∘ h⁻¹`. Rather than inverting the learned `h` numerically, the
//! forward map `c = h ∘ g` is differentiated at a source point `s₀` and the
//! second-order inverse-function identity
//!
//! `∂²v_i/∂y_j∂y_k = −Σ_{a,b,e} [J_c⁻¹]_{ia} ∂²c_a/∂s_b∂s_e [J_c⁻¹]_{bj} [J_c⁻¹]_{ek}`
//!
//! gives the derivatives of `v` at `y₀ = c(s₀)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::stencil::cross_derivative_stencil;
use crate::error::{NicaError, Result};
use crate::linalg;

pub const MAX_JACOBIAN_CONDITION: f64 = 1e8;

/// `γ_jk` and the first-derivative head of `κ_jk` at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGamma {
    pub j: usize,
    pub k: usize,
    /// `∂v_i/∂y_j · ∂v_i/∂y_k` for each `i`.
    pub first_products: Vec<f64>,
    pub gamma: Vec<f64>,
    pub norm: f64,
}

impl PairGamma {
    /// `κ_jk = [first_products, γ_jk]`.
    pub fn kappa(&self) -> Vec<f64> {
        self.first_products.iter().chain(&self.gamma).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPoint {
    pub y0: Vec<f64>,
    /// `J_v = J_c⁻¹` at `y₀`.
    pub jacobian_v: Vec<Vec<f64>>,
    pub pairs: Vec<PairGamma>,
}

/// Central-difference Jacobian `J[a][b] = ∂c_a/∂s_b`.
pub fn jacobian<F>(c: &F, s0: ArrayView1<f64>, step: f64) -> Result<Array2<f64>>
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    let d = s0.len();
    let mut jac = Array2::zeros((d, d));
    let mut probe = s0.to_owned();
    for b in 0..d {
        probe[b] = s0[b] + step;
        let up = c(probe.view());
        probe[b] = s0[b] - step;
        let down = c(probe.view());
        probe[b] = s0[b];
        if up.len() != d || down.len() != d {
            return Err(NicaError::DimensionMismatch {
                context: "composition output",
                expected: d,
                got: up.len(),
            });
        }
        for a in 0..d {
            jac[[a, b]] = (up[a] - down[a]) / (2.0 * step);
        }
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(NicaError::invalid("non-finite Jacobian entry"));
    }
    Ok(jac)
}

/// Second derivatives `H[a][b][e] = ∂²c_a/∂s_b∂s_e`, mixed entries from the
/// four-point stencil and diagonal entries from the three-point rule.
fn second_derivatives<F>(c: &F, s0: ArrayView1<f64>, step: f64) -> Result<Vec<Array2<f64>>>
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    let d = s0.len();
    let mut hess = vec![Array2::<f64>::zeros((d, d)); d];
    let center = c(s0);
    let mut probe = s0.to_owned();
    for b in 0..d {
        probe[b] = s0[b] + step;
        let up = c(probe.view());
        probe[b] = s0[b] - step;
        let down = c(probe.view());
        probe[b] = s0[b];
        for a in 0..d {
            hess[a][[b, b]] = (up[a] - 2.0 * center[a] + down[a]) / (step * step);
        }
    }
    for b in 0..d {
        for e in (b + 1)..d {
            // one set of corner evaluations serves every output coordinate
            let eval = |db: f64, de: f64| -> Array1<f64> {
                let mut p = s0.to_owned();
                p[b] += db;
                p[e] += de;
                c(p.view())
            };
            let pp = eval(step, step);
            let pm = eval(step, -step);
            let mp = eval(-step, step);
            let mm = eval(-step, -step);
            for a in 0..d {
                let table = [[mm[a], mp[a]], [pm[a], pp[a]]];
                let f = |x: f64, y: f64| table[usize::from(x > 0.0)][usize::from(y > 0.0)];
                let v = cross_derivative_stencil(f, 0.0, 0.0, step, step)?;
                hess[a][[b, e]] = v;
                hess[a][[e, b]] = v;
            }
        }
    }
    if hess.iter().flat_map(|h| h.iter()).any(|v| !v.is_finite()) {
        return Err(NicaError::invalid("non-finite second derivative"));
    }
    Ok(hess)
}

/// `γ_jk` for every pair `j < k` at one source point.
pub fn gamma_via_inverse<F>(c: F, s0: ArrayView1<f64>, step: f64) -> Result<GammaPoint>
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    gamma_at_point(&c, s0, step, 0)
}

fn gamma_at_point<F>(c: &F, s0: ArrayView1<f64>, step: f64, index: usize) -> Result<GammaPoint>
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    if !(step > 0.0) {
        return Err(NicaError::invalid("gamma step must be positive"));
    }
    let d = s0.len();
    let jac = jacobian(c, s0, step)?;
    let cond = linalg::condition_number(&jac);
    if !(cond <= MAX_JACOBIAN_CONDITION) {
        return Err(NicaError::IllConditionedPoint { point: index, cond });
    }
    let jinv = linalg::inverse(&jac)?;
    let hess = second_derivatives(c, s0, step)?;

    // T[a][j][k] = Σ_{b,e} H[a][b][e] Jinv[b][j] Jinv[e][k]
    let transformed: Vec<Array2<f64>> = hess.iter().map(|h| jinv.t().dot(h).dot(&jinv)).collect();
    let mut pairs = Vec::with_capacity(d * (d.saturating_sub(1)) / 2);
    for j in 0..d {
        for k in (j + 1)..d {
            let gamma: Vec<f64> = (0..d)
                .map(|i| -(0..d).map(|a| jinv[[i, a]] * transformed[a][[j, k]]).sum::<f64>())
                .collect();
            let first_products = (0..d).map(|i| jinv[[i, j]] * jinv[[i, k]]).collect();
            let norm = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
            pairs.push(PairGamma {
                j,
                k,
                first_products,
                gamma,
                norm,
            });
        }
    }
    Ok(GammaPoint {
        y0: c(s0).to_vec(),
        jacobian_v: jinv.outer_iter().map(|r| r.to_vec()).collect(),
        pairs,
    })
}

/// Amari-style index `Σ_i(Σ_j|a_ij|/max_j|a_ij| − 1) + Σ_j(Σ_i|a_ij|/max_i|a_ij| − 1)`,
/// zero exactly for scaled permutation matrices.
pub fn jacobian_permutation_score(jac: ArrayView2<f64>) -> Result<f64> {
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(NicaError::invalid("Jacobian entries must be finite"));
    }
    let abs = jac.mapv(f64::abs);
    let mut score = 0.0;
    for (axis, lines) in [("row", abs.rows()), ("column", abs.columns())] {
        for (idx, line) in lines.into_iter().enumerate() {
            let max = line.iter().fold(0.0f64, |m, &v| m.max(v));
            if max == 0.0 {
                return Err(NicaError::invalid(format!("Jacobian {axis} {idx} is all zero")));
            }
            score += line.sum() / max - 1.0;
        }
    }
    Ok(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub j: usize,
    pub k: usize,
    pub mean_norm: f64,
    pub max_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub point: usize,
    pub reason: String,
}

/// `γ_jk` summaries over a set of evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReport {
    pub estimator: String,
    pub step: f64,
    pub pairs: Vec<PairSummary>,
    /// `(point index, evaluation)` for every point that was evaluated.
    pub points: Vec<(usize, GammaPoint)>,
    pub skipped: Vec<SkippedPoint>,
    pub mean_permutation_score: f64,
    pub max_permutation_score: f64,
    /// Mean over pairs of `mean_norm`.
    pub gamma_mean: f64,
}

impl GammaReport {
    /// Evaluates `c` at each row of `sources`. Ill-conditioned points are
    /// skipped and listed; other errors abort.
    pub fn evaluate<F>(c: F, sources: ArrayView2<f64>, step: f64) -> Result<Self>
    where
        F: Fn(ArrayView1<f64>) -> Array1<f64>,
    {
        let d = sources.ncols();
        let mut points = Vec::new();
        let mut skipped = Vec::new();
        for (idx, s0) in sources.outer_iter().enumerate() {
            match gamma_at_point(&c, s0, step, idx) {
                Ok(p) => points.push((idx, p)),
                Err(e @ NicaError::IllConditionedPoint { .. }) | Err(e @ NicaError::Singular(_)) => {
                    skipped.push(SkippedPoint {
                        point: idx,
                        reason: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
        let mut pairs = Vec::new();
        for j in 0..d {
            for k in (j + 1)..d {
                let norms: Vec<f64> = points
                    .iter()
                    .flat_map(|(_, p)| p.pairs.iter().filter(|q| q.j == j && q.k == k).map(|q| q.norm))
                    .collect();
                let mean_norm = if norms.is_empty() {
                    f64::NAN
                } else {
                    norms.iter().sum::<f64>() / norms.len() as f64
                };
                let max_norm = norms.iter().fold(0.0f64, |m, &v| m.max(v));
                pairs.push(PairSummary { j, k, mean_norm, max_norm });
            }
        }
        let scores: Vec<f64> = points
            .iter()
            .map(|(_, p)| {
                let jv = Array2::from_shape_fn((d, d), |(i, j)| p.jacobian_v[i][j]);
                jacobian_permutation_score(jv.view())
            })
            .collect::<Result<_>>()?;
        let mean_permutation_score = if scores.is_empty() {
            f64::NAN
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        };
        let max_permutation_score = scores.iter().fold(0.0f64, |m, &v| m.max(v));
        let gamma_mean = if pairs.is_empty() {
            0.0
        } else {
            pairs.iter().map(|p| p.mean_norm).sum::<f64>() / pairs.len() as f64
        };
        Ok(GammaReport {
            estimator: "inverse-function theorem on c = h∘g with finite-difference derivatives".into(),
            step,
            pairs,
            points,
            skipped,
            mean_permutation_score,
            max_permutation_score,
            gamma_mean,
        })
    }

    /// Rows `(point_index, j, k, gamma_norm)`.
    pub fn csv_rows(&self) -> Vec<(usize, usize, usize, f64)> {
        self.points
            .iter()
            .flat_map(|(idx, p)| p.pairs.iter().map(move |q| (*idx, q.j, q.k, q.norm)))
            .collect()
    }
}
