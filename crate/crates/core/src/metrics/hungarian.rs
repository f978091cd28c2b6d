//! Minimum-cost perfect matching on a square cost matrix (Kuhn–Munkres with
//! row/column potentials, O(n³)).

use ndarray::Array2;

use crate::error::{NicaError, Result};

/// Returns `π` with row `i` assigned to column `π[i]`, minimizing
/// `Σ_i cost[i, π[i]]`.
pub fn hungarian(cost: &Array2<f64>) -> Result<Vec<usize>> {
    let (n, m) = cost.dim();
    if n != m {
        return Err(NicaError::invalid(format!("assignment needs a square matrix, got {n}x{m}")));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(NicaError::invalid("assignment cost entries must be finite"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    // 1-based internals; column 0 is a virtual root.
    let mut row_pot = vec![0.0; n + 1];
    let mut col_pot = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut prev = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut col0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = col_owner[col0];
            let mut delta = f64::INFINITY;
            let mut next = 0usize;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let slack = cost[[r - 1, c - 1]] - row_pot[r] - col_pot[c];
                if slack < min_slack[c] {
                    min_slack[c] = slack;
                    prev[c] = col0;
                }
                if min_slack[c] < delta {
                    delta = min_slack[c];
                    next = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    row_pot[col_owner[c]] += delta;
                    col_pot[c] -= delta;
                } else {
                    min_slack[c] -= delta;
                }
            }
            col0 = next;
            if col_owner[col0] == 0 {
                break;
            }
        }
        // augment along the alternating path
        loop {
            let p = prev[col0];
            col_owner[col0] = col_owner[p];
            col0 = p;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for c in 1..=n {
        assignment[col_owner[c] - 1] = c - 1;
    }
    Ok(assignment)
}

pub fn assignment_cost(cost: &Array2<f64>, assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_by_two_identity() {
        let c = array![[1.0, 2.0], [2.0, 1.0]];
        let p = hungarian(&c).unwrap();
        assert_eq!(p, vec![0, 1]);
        assert_eq!(assignment_cost(&c, &p), 2.0);
    }

    #[test]
    fn recovers_zero_arrangement() {
        let target = [2usize, 0, 3, 1];
        let c = Array2::from_shape_fn((4, 4), |(i, j)| if target[i] == j { 0.0 } else { 1e6 });
        assert_eq!(hungarian(&c).unwrap(), target.to_vec());
    }

    #[test]
    fn rejects_non_square_and_non_finite() {
        assert!(hungarian(&Array2::zeros((2, 3))).is_err());
        assert!(hungarian(&array![[f64::NAN]]).is_err());
    }

    #[test]
    fn negative_costs_supported() {
        let c = array![[-5.0, -1.0], [-1.0, -7.0]];
        assert_eq!(hungarian(&c).unwrap(), vec![0, 1]);
    }
}
