//! Linear assignment by the shortest augmenting path method with potentials, O(n³).

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;

/// Column assigned to each row minimizing the total cost of a square matrix.
pub fn min_cost_assignment(cost: &Matrix<f64>) -> Vec<usize> {
    let n = cost.rows();
    assert_eq!(n, cost.cols(), "assignment matrix must be square");
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    assign
}

/// Column assigned to each row maximizing the total weight.
pub fn max_weight_assignment(weight: &Matrix<f64>) -> Vec<usize> {
    min_cost_assignment(&weight.map(|w| -w))
}

pub fn assignment_value(weight: &Matrix<f64>, assign: &[usize]) -> f64 {
    assign.iter().enumerate().map(|(i, &j)| weight[(i, j)]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_known_case() {
        let c = Matrix::from_fn(3, 3, |i, j| [[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]][i][j]);
        let a = min_cost_assignment(&c);
        assert_eq!(assignment_value(&c, &a), 5.0);
        let mut seen = a.clone();
        seen.sort_unstable();
        assert_eq!(seen, [0, 1, 2]);
    }

    #[test]
    fn maximization_picks_diagonal() {
        let w = Matrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.1 });
        assert_eq!(max_weight_assignment(&w), [0, 1, 2, 3]);
    }

    #[test]
    fn empty_matrix() {
        assert!(min_cost_assignment(&Matrix::zeros(0, 0)).is_empty());
    }
}
