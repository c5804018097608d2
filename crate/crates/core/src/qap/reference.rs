//! Reference oracle for the relaxation optimum: accelerated projected
//! gradient with Euclidean projection onto the doubly stochastic polytope by
//! Dykstra's alternating projections. This path shares nothing with the
//! Bregman/Sinkhorn machinery it is used to check.

use nalgebra::{DMatrix, DVector};

use crate::bregman::Point;
use crate::error::{Error, Result};

use super::{apply_h, lap, objective_and_gradient, QapProblem};

const DYKSTRA_SWEEP_CAP: usize = 100_000;
const OUTER_CAP: usize = 100_000;

/// Euclidean projection onto the affine set `{X : Xe = e, Xᵀe = e}`,
/// in closed form.
pub fn project_affine(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let nf = n as f64;
    let mut row_sums = DVector::zeros(n);
    let mut col_sums = DVector::zeros(n);
    for i in 0..n {
        row_sums[i] = x.row(i).sum();
    }
    for j in 0..n {
        col_sums[j] = x.column(j).sum();
    }
    let total: f64 = row_sums.sum();
    let shift = (nf - total) / (2.0 * nf * nf);
    // X + a eᵀ + e bᵀ with the symmetric split of the free mean.
    DMatrix::from_fn(n, n, |i, j| {
        let a = (1.0 - row_sums[i]) / nf - shift;
        let b = (1.0 - col_sums[j]) / nf - shift;
        x[(i, j)] + a + b
    })
}

/// Dykstra's alternating projections between the marginal affine set and the
/// nonnegative orthant. Stops when the orthant-feasible iterate satisfies the
/// marginals within `tol`.
pub fn dykstra_project(x: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let mut y = x.clone();
    let mut p = DMatrix::zeros(n, n);
    let mut q = DMatrix::zeros(n, n);
    for _ in 0..DYKSTRA_SWEEP_CAP {
        let a = project_affine(&(&y + &p));
        p = &y + &p - &a;
        let b = (&a + &q).map(|v| v.max(0.0));
        q = &a + &q - &b;
        y = b;
        let mut marginal_err = 0.0_f64;
        for i in 0..n {
            marginal_err = marginal_err.max((y.row(i).sum() - 1.0).abs());
        }
        for j in 0..n {
            marginal_err = marginal_err.max((y.column(j).sum() - 1.0).abs());
        }
        if marginal_err <= tol {
            return Ok(y);
        }
    }
    Err(Error::Projection(format!(
        "Dykstra did not reach tolerance {tol:.1e} within {DYKSTRA_SWEEP_CAP} sweeps"
    )))
}

/// The reference solution with its quality certificates.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub x_star: Point,
    pub f_star: f64,
    /// Final fixed-point residual `‖X − proj(X − ∇f(X)/L_f)‖_F`.
    pub pg_residual: f64,
    /// Linearization gap `⟨∇f(x*), x* − v⟩` with `v` the assignment-LP
    /// minimizer of the gradient cost: an upper bound on `f(x*) − f*`
    /// certified independently of the iteration.
    pub fw_gap: f64,
    pub iterations: usize,
}

/// Minimizes `⟨X, H(X)⟩` over the doubly stochastic polytope by accelerated
/// projected gradient with function-value restart, stopping at projected
/// gradient residual `tol`.
pub fn reference_solve(problem: &QapProblem, tol: f64) -> Result<ReferenceSolution> {
    let n = problem.instance.n;
    let proj_tol = (tol * 1e-2).clamp(1e-14, 1e-10);
    let start = dykstra_project(&DMatrix::from_element(n, n, 1.0 / n as f64), proj_tol)?;

    if problem.l == 0.0 {
        // Degenerate operator: every feasible point is optimal.
        return Ok(ReferenceSolution {
            x_star: Point::new(start)?,
            f_star: 0.0,
            pg_residual: 0.0,
            fw_gap: 0.0,
            iterations: 0,
        });
    }

    let step = 1.0 / problem.l;
    let mut x = start.clone();
    let mut y = start;
    let mut f_x = quadratic(problem, &x);
    let mut t = 1.0_f64;
    for iter in 0..OUTER_CAP {
        let grad_y = apply_h(problem, &y)? * 2.0;
        let x_next = dykstra_project(&(&y - &grad_y * step), proj_tol)?;
        let f_next = quadratic(problem, &x_next);

        // Fixed-point residual at the new iterate.
        let grad_next = apply_h(problem, &x_next)? * 2.0;
        let mapped = dykstra_project(&(&x_next - &grad_next * step), proj_tol)?;
        let residual = (&x_next - &mapped).norm();
        if residual <= tol {
            let x_star = mapped; // one extra projection never hurts feasibility
            let f_star = quadratic(problem, &x_star);
            let fw_gap = frank_wolfe_gap(problem, &x_star)?;
            return Ok(ReferenceSolution {
                x_star: Point::new(x_star)?,
                f_star,
                pg_residual: residual,
                fw_gap,
                iterations: iter + 1,
            });
        }

        if f_next > f_x {
            // Function restart: drop the momentum and retake the step from x.
            t = 1.0;
            y = x.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            y = &x_next + (&x_next - &x) * beta;
            t = t_next;
            x = x_next;
            f_x = f_next;
        }
    }
    Err(Error::ReferenceSolve(format!(
        "projected gradient residual did not reach {tol:.1e} within {OUTER_CAP} iterations"
    )))
}

fn quadratic(problem: &QapProblem, x: &DMatrix<f64>) -> f64 {
    apply_h(problem, x).expect("square").dot(x)
}

/// `⟨∇f(x), x − v⟩` with `v` the vertex of the polytope minimizing the linear
/// cost `∇f(x)`; by convexity this bounds the optimality gap from above.
fn frank_wolfe_gap(problem: &QapProblem, x: &DMatrix<f64>) -> Result<f64> {
    let (_, grad) = objective_and_gradient(problem, x)?;
    let sol = lap::solve_assignment(&grad)?;
    let n = problem.instance.n;
    let mut vertex = DMatrix::zeros(n, n);
    for (i, &j) in sol.row_to_col.iter().enumerate() {
        vertex[(i, j)] = 1.0;
    }
    Ok(grad.dot(x) - grad.dot(&vertex))
}
