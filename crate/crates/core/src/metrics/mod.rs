//! Identifiability evaluation: MI between recovered and true components,
//! permutation matching, and a downstream linear classifier.

pub mod classifier;
pub mod hungarian;
pub mod mi;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::rng::derive_seed;

pub use classifier::{fit_linear_classifier, majority_baseline_error, ClassifierConfig, LinearClassifier};
pub use hungarian::{assignment_cost, hungarian};
pub use mi::{mi_histogram_kde, mi_knn, mi_knn_seeded, MiEstimator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    /// `mi_matrix[i][j] = MI(ŷ_i, s_j)` in nats.
    pub mi_matrix: Vec<Vec<f64>>,
    /// Recovered component `i` is matched to source `assignment[i]`.
    pub assignment: Vec<usize>,
    pub per_component_mi: Vec<f64>,
    pub mean_mi: f64,
}

/// Estimates every `MI(ŷ_i, s_j)` and matches components by maximal total MI.
pub fn mi_report(y: ArrayView2<f64>, s: ArrayView2<f64>, estimator: MiEstimator, seed: u64) -> Result<MiReport> {
    check_dim("recovered rows", s.nrows(), y.nrows())?;
    check_dim("recovered columns", s.ncols(), y.ncols())?;
    let d = y.ncols();
    let ys: Vec<Vec<f64>> = (0..d).map(|i| y.column(i).to_vec()).collect();
    let ss: Vec<Vec<f64>> = (0..d).map(|j| s.column(j).to_vec()).collect();
    let entries: Vec<f64> = (0..d * d)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / d, idx % d);
            let entry_seed = derive_seed(seed, &["mi", &i.to_string(), &j.to_string()]);
            estimator.estimate(&ys[i], &ss[j], entry_seed).map(|v| v.max(0.0))
        })
        .collect::<Result<_>>()?;
    let matrix = Array2::from_shape_vec((d, d), entries).expect("d*d entries");
    let assignment = hungarian(&matrix.mapv(|v| -v))?;
    let per_component_mi: Vec<f64> = assignment.iter().enumerate().map(|(i, &j)| matrix[[i, j]]).collect();
    let mean_mi = per_component_mi.iter().sum::<f64>() / d.max(1) as f64;
    Ok(MiReport {
        mi_matrix: matrix.outer_iter().map(|r| r.to_vec()).collect(),
        assignment,
        per_component_mi,
        mean_mi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::{sample_tcl, GenerativeSpec, TclConfig};
    use crate::rng;
    use ndarray::s;

    fn sources(n: usize) -> Array2<f64> {
        let spec = GenerativeSpec::tcl(&TclConfig::default(), 4).unwrap();
        sample_tcl(&spec, n, 9).unwrap().s.unwrap()
    }

    #[test]
    fn exact_recovery_is_identity_matched() {
        let s = sources(2000);
        let mut r = rng::seeded(1);
        let y = s.mapv(|v| v + 1e-6 * rng::gaussian(&mut r));
        let rep = mi_report(y.view(), s.view(), MiEstimator::default(), 0).unwrap();
        assert_eq!(rep.assignment, vec![0, 1]);
        assert!(rep.mi_matrix[0][0] > rep.mi_matrix[0][1] + 2.0);
        assert!(rep.mi_matrix[1][1] > rep.mi_matrix[1][0] + 2.0);
        assert!((rep.mean_mi - 0.5 * (rep.per_component_mi[0] + rep.per_component_mi[1])).abs() < 1e-15);
    }

    #[test]
    fn reversed_columns_are_matched_in_reverse() {
        let s = sources(2000);
        let y = s.slice(s![.., ..;-1]).to_owned();
        let rep = mi_report(y.view(), s.view(), MiEstimator::default(), 0).unwrap();
        assert_eq!(rep.assignment, vec![1, 0]);
    }

    #[test]
    fn mixed_observations_score_below_unmixed() {
        let spec = GenerativeSpec::tcl(&TclConfig::default(), 4).unwrap();
        let b = sample_tcl(&spec, 5000, 3).unwrap();
        let s = b.s.as_ref().unwrap();
        let unmixed = spec.mixing.invert_rows(b.x.view());
        let mixed = mi_report(b.x.view(), s.view(), MiEstimator::default(), 0).unwrap();
        let oracle = mi_report(unmixed.view(), s.view(), MiEstimator::default(), 0).unwrap();
        assert!(mixed.mean_mi < oracle.mean_mi);
    }
}
