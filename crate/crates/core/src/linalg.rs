//! Thin bridges between `ndarray` storage and `nalgebra` factorizations.

use nalgebra::DMatrix;
use ndarray::Array2;

use crate::error::{NicaError, Result};

pub fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn singular_values(a: &Array2<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = to_na(a).singular_values().iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    sv
}

pub fn min_singular_value(a: &Array2<f64>) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(a: &Array2<f64>) -> f64 {
    let sv = singular_values(a);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != a.ncols() {
        return Err(NicaError::invalid("cannot invert a non-square matrix"));
    }
    to_na(a)
        .try_inverse()
        .map(|m| from_na(&m))
        .ok_or_else(|| NicaError::Singular(format!("{}x{} matrix has no inverse", a.nrows(), a.ncols())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn condition_of_diag() {
        let a = array![[4.0, 0.0], [0.0, 0.5]];
        assert!((condition_number(&a) - 8.0).abs() < 1e-12);
        assert!((min_singular_value(&a) - 0.5).abs() < 1e-12);
        assert!(condition_number(&array![[1.0, 2.0], [2.0, 4.0]]) > 1e15);
    }

    #[test]
    fn inverse_round_trip() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let inv = inverse(&a).unwrap();
        let prod = a.dot(&inv);
        assert!((prod - Array2::<f64>::eye(2)).iter().all(|v| v.abs() < 1e-14));
        assert!(inverse(&array![[1.0, 2.0], [2.0, 4.0]]).is_err());
    }
}
