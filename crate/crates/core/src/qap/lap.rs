//! Dense linear assignment by shortest augmenting paths, maintaining dual
//! potentials throughout. The duals are the point of this implementation: the
//! relaxation construction consumes an optimal `(u, v)` pair of
//! `max Σu + Σv  s.t.  u_i + v_j ≤ c_ij`, which is the LP dual of the
//! min-cost assignment, and strong duality ties the two together.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Optimal assignment and dual potentials of a square min-cost LAP.
#[derive(Clone, Debug)]
pub struct AssignmentSolution {
    /// `row_to_col[i] = j` assigned to row `i`.
    pub row_to_col: Vec<usize>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub cost: f64,
}

/// Solves the min-cost assignment on a square matrix. Ties in the augmenting
/// search are broken toward the lowest column index, so the output is
/// deterministic.
pub fn solve_assignment(cost: &DMatrix<f64>) -> Result<AssignmentSolution> {
    let n = cost.nrows();
    if cost.ncols() != n || n == 0 {
        return Err(Error::Assignment(format!(
            "cost matrix must be square and nonempty, got {}x{}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::Assignment("cost matrix has non-finite entries".into()));
    }

    // 1-based with a sentinel column 0 holding the row currently searched.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column j -> row (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
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
            if !delta.is_finite() {
                return Err(Error::Assignment("augmenting search stalled".into()));
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Augment along the alternating path.
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            row_to_col[matched_row[j] - 1] = j - 1;
        }
    }
    let total: f64 = row_to_col
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[(i, j)])
        .sum();
    Ok(AssignmentSolution {
        row_to_col,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
        cost: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(n: usize, vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, vals)
    }

    #[test]
    fn small_known_instance() {
        let c = mat(3, &[250.0, 400.0, 350.0, 400.0, 600.0, 350.0, 200.0, 400.0, 250.0]);
        let sol = solve_assignment(&c).unwrap();
        assert_eq!(sol.row_to_col, vec![1, 2, 0]);
        assert!((sol.cost - 950.0).abs() < 1e-12);
    }

    #[test]
    fn duals_are_feasible_and_tight() {
        let c = mat(
            4,
            &[
                0.0, 1.0, 2.0, 3.0, //
                4.0, 5.0, 6.0, 0.0, //
                0.0, 2.0, 4.0, 5.0, //
                3.0, 0.0, 0.0, 9.0,
            ],
        );
        let sol = solve_assignment(&c).unwrap();
        let dual_value: f64 = sol.u.iter().sum::<f64>() + sol.v.iter().sum::<f64>();
        // Strong duality.
        assert!((dual_value - sol.cost).abs() < 1e-9);
        for i in 0..4 {
            for j in 0..4 {
                assert!(sol.u[i] + sol.v[j] <= c[(i, j)] + 1e-9, "dual infeasible at ({i},{j})");
            }
        }
        // Complementary slackness on matched edges.
        for (i, &j) in sol.row_to_col.iter().enumerate() {
            assert!((sol.u[i] + sol.v[j] - c[(i, j)]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_cost_matrix() {
        let n = 5;
        let c = DMatrix::from_element(n, n, 1.0);
        let sol = solve_assignment(&c).unwrap();
        assert!((sol.cost - n as f64).abs() < 1e-12);
        let dual: f64 = sol.u.iter().sum::<f64>() + sol.v.iter().sum::<f64>();
        assert!((dual - n as f64).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_square() {
        let c = DMatrix::from_element(2, 3, 1.0);
        assert!(solve_assignment(&c).is_err());
    }
}
