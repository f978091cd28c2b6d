//! Mutual information between two scalar samples.
//!
//! The default estimator is the Kraskov–Stögbauer–Grassberger k-nearest-
//! neighbor estimator (first variant, max-norm in the joint space):
//!
//! `I(A;B) ≈ ψ(k) + ψ(N) − ⟨ψ(n_a + 1) + ψ(n_b + 1)⟩`
//!
//! where `n_a`, `n_b` count marginal neighbors strictly inside the distance to
//! each point's k-th joint neighbor. A smoothed-histogram plug-in estimator is
//! kept alongside for cross-checks.

use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{NicaError, Result};
use crate::rng;

/// Jitter relative to the data range, breaking exact ties between samples.
pub const JITTER_FRACTION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MiEstimator {
    Ksg { k: usize },
    HistogramKde { bins: usize },
}

impl Default for MiEstimator {
    fn default() -> Self {
        MiEstimator::Ksg { k: 5 }
    }
}

impl MiEstimator {
    pub fn estimate(self, a: &[f64], b: &[f64], seed: u64) -> Result<f64> {
        match self {
            MiEstimator::Ksg { k } => mi_knn_seeded(a, b, k, seed),
            MiEstimator::HistogramKde { bins } => mi_histogram_kde(a, b, bins),
        }
    }
}

/// Digamma at positive integers: `ψ(n) = −γ + Σ_{j<n} 1/j`.
fn digamma_table(max: usize) -> Vec<f64> {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let mut table = vec![f64::NAN; max + 1];
    if max >= 1 {
        table[1] = -EULER_GAMMA;
    }
    for n in 2..=max {
        table[n] = table[n - 1] + 1.0 / (n - 1) as f64;
    }
    table
}

fn validate_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(NicaError::DimensionMismatch {
            context: "mutual information samples",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(NicaError::invalid("mutual information samples must be finite"));
    }
    Ok(())
}

fn jittered(v: &[f64], rng: &mut rng::Rng) -> Vec<f64> {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    let mag = if range > 0.0 { JITTER_FRACTION * range } else { JITTER_FRACTION };
    v.iter().map(|&x| x + mag * rng.gen_range(-1.0..1.0)).collect()
}

/// KSG estimate in nats, clipped below at zero. Jitter is seeded with 0.
pub fn mi_knn(a: &[f64], b: &[f64], k: usize) -> Result<f64> {
    mi_knn_seeded(a, b, k, 0)
}

pub fn mi_knn_seeded(a: &[f64], b: &[f64], k: usize, seed: u64) -> Result<f64> {
    validate_pair(a, b)?;
    let n = a.len();
    if k == 0 || n <= k {
        return Err(NicaError::invalid(format!("KSG needs N > k >= 1, got N={n}, k={k}")));
    }
    let mut rng = rng::seeded(seed);
    let a = jittered(a, &mut rng);
    let b = jittered(b, &mut rng);
    let raw = ksg_raw(&a, &b, k);
    Ok(raw.max(0.0))
}

/// Unclipped KSG estimate on already-jittered data.
fn ksg_raw(a: &[f64], b: &[f64], k: usize) -> f64 {
    let n = a.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
    let sa: Vec<f64> = order.iter().map(|&i| a[i]).collect();
    let sb: Vec<f64> = order.iter().map(|&i| b[i]).collect();
    let mut sorted_b = b.to_vec();
    sorted_b.sort_by(f64::total_cmp);

    let psi = digamma_table(n + 1);
    let mut heap: BinaryHeap<OrderedFloat<f64>> = BinaryHeap::with_capacity(k + 1);
    let mut acc = 0.0;
    for p in 0..n {
        heap.clear();
        let (xa, xb) = (sa[p], sb[p]);
        let (mut left, mut right) = (p, p + 1);
        let mut left_open = p > 0;
        let mut right_open = right < n;
        while left_open || right_open {
            let bound = if heap.len() == k { heap.peek().unwrap().0 } else { f64::INFINITY };
            // step toward the nearer side in the sorted coordinate
            let left_gap = if left_open { xa - sa[left - 1] } else { f64::INFINITY };
            let right_gap = if right_open { sa[right] - xa } else { f64::INFINITY };
            let (gap, go_left) = if left_gap <= right_gap { (left_gap, true) } else { (right_gap, false) };
            if gap >= bound {
                break;
            }
            let q = if go_left {
                left -= 1;
                left_open = left > 0;
                left
            } else {
                let q = right;
                right += 1;
                right_open = right < n;
                q
            };
            let dist = gap.max((sb[q] - xb).abs());
            if heap.len() < k {
                heap.push(OrderedFloat(dist));
            } else if dist < bound {
                heap.pop();
                heap.push(OrderedFloat(dist));
            }
        }
        let eps = heap.peek().unwrap().0;
        let n_a = count_within(&sa, xa, eps);
        let n_b = count_within(&sorted_b, xb, eps);
        acc += psi[n_a + 1] + psi[n_b + 1];
    }
    psi[k] + psi[n] - acc / n as f64
}

/// Number of other samples strictly within `eps` of `center` in a sorted slice.
fn count_within(sorted: &[f64], center: f64, eps: f64) -> usize {
    // compare on rounded differences so the k-th neighbour itself is never counted
    let lo = sorted.partition_point(|&v| v < center && center - v >= eps);
    let hi = sorted.partition_point(|&v| v < center || v - center < eps);
    (hi - lo).saturating_sub(1)
}

/// Plug-in MI from a Gaussian-smoothed 2-D histogram on rank-free equal-width
/// bins; bandwidth is one bin.
pub fn mi_histogram_kde(a: &[f64], b: &[f64], bins: usize) -> Result<f64> {
    validate_pair(a, b)?;
    if bins < 2 || a.len() < 2 {
        return Err(NicaError::invalid("histogram estimator needs at least 2 bins and 2 samples"));
    }
    let bin_of = |v: &[f64]| -> Vec<usize> {
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let width = (hi - lo).max(f64::MIN_POSITIVE);
        v.iter()
            .map(|&x| (((x - lo) / width) * bins as f64).floor().min(bins as f64 - 1.0) as usize)
            .collect()
    };
    let ia = bin_of(a);
    let ib = bin_of(b);
    let mut joint = vec![0.0; bins * bins];
    for (&i, &j) in ia.iter().zip(&ib) {
        joint[i * bins + j] += 1.0;
    }
    let kernel: Vec<f64> = (-3i32..=3).map(|o| (-0.5 * f64::from(o * o)).exp()).collect();
    let smooth = |src: &[f64], along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; bins * bins];
        for i in 0..bins {
            for j in 0..bins {
                let mut acc = 0.0;
                for (t, w) in kernel.iter().enumerate() {
                    let o = t as i64 - 3;
                    let (ii, jj) = if along_rows { (i as i64 + o, j as i64) } else { (i as i64, j as i64 + o) };
                    if ii >= 0 && jj >= 0 && (ii as usize) < bins && (jj as usize) < bins {
                        acc += w * src[ii as usize * bins + jj as usize];
                    }
                }
                out[i * bins + j] = acc;
            }
        }
        out
    };
    let joint = smooth(&smooth(&joint, true), false);
    let total: f64 = joint.iter().sum();
    let p: Vec<f64> = joint.iter().map(|v| v / total).collect();
    let pa: Vec<f64> = (0..bins).map(|i| (0..bins).map(|j| p[i * bins + j]).sum()).collect();
    let pb: Vec<f64> = (0..bins).map(|j| (0..bins).map(|i| p[i * bins + j]).sum()).collect();
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let pij = p[i * bins + j];
            if pij > 0.0 {
                mi += pij * (pij / (pa[i] * pb[j])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}
