//! Downstream logistic-regression classifier on extracted features.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, NicaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// L2 penalty on the weights (not the bias); keeps separable fits finite.
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            ridge: 1e-4,
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

/// `sign(wᵀ z + b)` on features standardized with the training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

impl LinearClassifier {
    fn standardize_row(&self, row: ndarray::ArrayView1<f64>) -> impl Iterator<Item = f64> + '_ {
        let row = row.to_owned();
        (0..row.len()).map(move |j| (row[j] - self.feature_mean[j]) / self.feature_scale[j])
    }

    pub fn decision(&self, features: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_dim("classifier features", self.weights.len(), features.ncols())?;
        Ok(features
            .outer_iter()
            .map(|row| self.standardize_row(row).zip(&self.weights).map(|(z, w)| z * w).sum::<f64>() + self.bias)
            .collect())
    }

    /// Predicted labels in {0, 1}.
    pub fn classify(&self, features: ArrayView2<f64>) -> Result<Vec<u8>> {
        Ok(self.decision(features)?.iter().map(|&v| u8::from(v > 0.0)).collect())
    }

    pub fn error_rate(&self, features: ArrayView2<f64>, labels: &[u8]) -> Result<f64> {
        check_dim("classifier labels", features.nrows(), labels.len())?;
        let pred = self.classify(features)?;
        let wrong = pred.iter().zip(labels).filter(|(p, l)| p != l).count();
        Ok(wrong as f64 / labels.len().max(1) as f64)
    }
}

/// Fits logistic regression by Newton iterations on the ridge-penalized
/// negative log-likelihood. Labels must be 0/1 with both classes present.
pub fn fit_linear_classifier(
    features: ArrayView2<f64>,
    labels: &[u8],
    config: &ClassifierConfig,
) -> Result<LinearClassifier> {
    let (n, p) = features.dim();
    check_dim("classifier labels", n, labels.len())?;
    if labels.iter().any(|&l| l > 1) {
        return Err(NicaError::invalid("classifier labels must be 0 or 1"));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == n {
        return Err(NicaError::SingleClass);
    }
    let feature_mean: Vec<f64> = features.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let feature_scale: Vec<f64> = features
        .std_axis(Axis(0), 0.0)
        .iter()
        .map(|&s| if s > 1e-12 { s } else { 1.0 })
        .collect();

    // design matrix with a trailing intercept column
    let design = DMatrix::from_fn(n, p + 1, |i, j| {
        if j == p {
            1.0
        } else {
            (features[[i, j]] - feature_mean[j]) / feature_scale[j]
        }
    });
    let y = DVector::from_iterator(n, labels.iter().map(|&l| f64::from(l)));
    let mut beta = DVector::<f64>::zeros(p + 1);
    let mut penalty = DMatrix::<f64>::identity(p + 1, p + 1) * config.ridge * n as f64;
    penalty[(p, p)] = 0.0;

    for _ in 0..config.max_iter {
        let eta = &design * &beta;
        let prob = eta.map(|v| 1.0 / (1.0 + (-v).exp()));
        let weight = prob.map(|q| (q * (1.0 - q)).max(1e-12));
        let grad = design.transpose() * (&prob - &y) + &penalty * &beta;
        let mut hess = penalty.clone();
        for i in 0..n {
            let row = design.row(i);
            hess += row.transpose() * row * weight[i];
        }
        let step = hess
            .lu()
            .solve(&grad)
            .ok_or_else(|| NicaError::Singular("logistic Hessian".into()))?;
        beta -= &step;
        if step.norm() < config.tol * (1.0 + beta.norm()) {
            break;
        }
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(NicaError::invalid("logistic regression diverged"));
    }
    Ok(LinearClassifier {
        weights: beta.rows(0, p).iter().copied().collect(),
        bias: beta[p],
        feature_mean,
        feature_scale,
    })
}

/// Fraction of the minority class: the error of always predicting the majority.
pub fn majority_baseline_error(labels: &[u8]) -> f64 {
    let ones = labels.iter().filter(|&&l| l == 1).count();
    let n = labels.len().max(1);
    ones.min(labels.len() - ones) as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::Array2;
    use rand::Rng as _;

    fn blobs(n: usize, sep: f64, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut r = rng::seeded(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = u8::from(r.gen_bool(0.5));
            let c = if label == 1 { sep } else { -sep };
            x[[i, 0]] = c + rng::gaussian(&mut r);
            x[[i, 1]] = c + rng::gaussian(&mut r);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs() {
        let (xtr, ytr) = blobs(1000, 4.0, 1);
        let (xte, yte) = blobs(1000, 4.0, 2);
        let clf = fit_linear_classifier(xtr.view(), &ytr, &ClassifierConfig::default()).unwrap();
        assert!(clf.error_rate(xte.view(), &yte).unwrap() <= 0.02);
    }

    #[test]
    fn shuffled_labels_are_chance() {
        let (xtr, _) = blobs(2000, 2.0, 3);
        let (xte, _) = blobs(2000, 2.0, 4);
        let mut r = rng::seeded(5);
        let ytr: Vec<u8> = (0..2000).map(|_| u8::from(r.gen_bool(0.5))).collect();
        let yte: Vec<u8> = (0..2000).map(|_| u8::from(r.gen_bool(0.5))).collect();
        let clf = fit_linear_classifier(xtr.view(), &ytr, &ClassifierConfig::default()).unwrap();
        let err = clf.error_rate(xte.view(), &yte).unwrap();
        assert!((err - 0.5).abs() <= 0.05, "err {err}");
    }

    #[test]
    fn constant_features_predict_majority() {
        let x = Array2::from_elem((100, 3), 2.5);
        let y: Vec<u8> = (0..100).map(|i| u8::from(i < 30)).collect();
        let clf = fit_linear_classifier(x.view(), &y, &ClassifierConfig::default()).unwrap();
        let err = clf.error_rate(x.view(), &y).unwrap();
        assert!((err - 0.3).abs() < 1e-12);
        assert!((majority_baseline_error(&y) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        let x = Array2::zeros((10, 2));
        assert!(matches!(
            fit_linear_classifier(x.view(), &[1; 10], &ClassifierConfig::default()),
            Err(NicaError::SingleClass)
        ));
    }
}
