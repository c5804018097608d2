//! Runtime verification of the sufficient-descent inequality and the
//! convergence-rate bounds, replayed from retained iterates with the
//! *measured* certificate values (residual norms and Bregman deviations)
//! instead of the scheduled tolerances.

use nalgebra::DMatrix;

use crate::bregman::{bregman_distance, Point};
use crate::error::{Error, Result};
use crate::schedules::ErrorAccumulator;

use super::trace::{RunTrace, SolverKind};
use super::Problem;

/// Maximum scaled violation of one inequality family over a run.
#[derive(Clone, Copy, Debug)]
pub struct BoundCheck {
    pub max_rel_violation: f64,
    pub worst_k: usize,
    pub checked: usize,
}

impl BoundCheck {
    fn from_series(violations: impl Iterator<Item = f64>) -> Self {
        let mut max_rel_violation = f64::NEG_INFINITY;
        let mut worst_k = 0;
        let mut checked = 0;
        for (k, v) in violations.enumerate() {
            if v > max_rel_violation {
                max_rel_violation = v;
                worst_k = k;
            }
            checked += 1;
        }
        if checked == 0 {
            max_rel_violation = f64::NEG_INFINITY;
        }
        BoundCheck {
            max_rel_violation,
            worst_k,
            checked,
        }
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_violation <= tol
    }
}

/// Per-iteration residuals of the sufficient-descent inequality.
#[derive(Clone, Debug)]
pub struct DescentReport {
    /// `LHS − RHS` per iteration; nonpositive (up to round-off) when the
    /// inequality holds.
    pub residuals: Vec<f64>,
    /// Magnitude reference per iteration for relative comparisons.
    pub scales: Vec<f64>,
    pub max_scaled_residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct IbpgBoundReport {
    pub averaged: BoundCheck,
    pub last_iterate: BoundCheck,
}

#[derive(Clone, Copy, Debug)]
pub struct VibpgBoundReport {
    pub rate_bound: BoundCheck,
    pub lyapunov: BoundCheck,
}

fn retained(trace: &RunTrace) -> Result<&super::trace::RetainedIterates> {
    trace.retained.as_ref().ok_or(Error::MissingIterates)
}

/// Arithmetic mean of the feasible iterates `x̃¹ … x̃ᵏ`.
pub fn averaged_iterate(trace: &RunTrace, k: usize) -> Result<Point> {
    let ret = retained(trace)?;
    if k == 0 {
        return Err(Error::EmptyAverage);
    }
    if k + 1 > ret.feasibles.len() {
        return Err(Error::MissingIterates);
    }
    let mut sum = DMatrix::zeros(ret.feasibles[1].shape().0, ret.feasibles[1].shape().1);
    for p in &ret.feasibles[1..=k] {
        sum += p.as_matrix();
    }
    Ok(Point::from(sum / k as f64))
}

/// Checks, for every iteration of an iBPG run,
/// `F(x̃^{k+1}) − F(x) ≤ L·D(x, x^k) − L·D(x, x^{k+1}) + δ̂_k‖x̃^{k+1} − x‖ + L·μ̂_k + ν̂_k`
/// at the reference point `x`, with measured certificate values on the
/// right-hand side.
pub fn check_descent_inequality<P: Problem>(
    trace: &RunTrace,
    problem: &P,
    x_ref: &Point,
) -> Result<DescentReport> {
    if trace.meta.solver != SolverKind::Ibpg {
        return Err(Error::TraceMismatch(
            "descent inequality is checked on iBPG traces".into(),
        ));
    }
    let ret = retained(trace)?;
    let kernel = problem.kernel();
    let l = trace.meta.l;
    let f_ref = problem.feasible_objective(x_ref);
    let mut residuals = Vec::with_capacity(trace.rows.len());
    let mut scales = Vec::with_capacity(trace.rows.len());
    let mut max_scaled = f64::NEG_INFINITY;
    for (k, row) in trace.rows.iter().enumerate() {
        let d_prev = bregman_distance(kernel, x_ref, &ret.anchors[k])?;
        let d_next = bregman_distance(kernel, x_ref, &ret.anchors[k + 1])?;
        let step = ret.feasibles[k + 1].sub(x_ref).norm();
        let lhs = problem.feasible_objective(&ret.feasibles[k + 1]) - f_ref;
        let rhs =
            l * d_prev - l * d_next + row.delta_norm * step + l * row.mu_measured + row.nu_claimed;
        let residual = lhs - rhs;
        let scale = 1.0 + lhs.abs() + l * d_prev + l * d_next + row.delta_norm * step;
        max_scaled = max_scaled.max(residual / scale);
        residuals.push(residual);
        scales.push(scale);
    }
    Ok(DescentReport {
        residuals,
        scales,
        max_scaled_residual: max_scaled,
    })
}

/// Rebuilds the running error sums of an iBPG run from its rows and retained
/// iterates.
fn replay_ibpg_accumulator<P: Problem>(
    trace: &RunTrace,
    problem: &P,
) -> Result<Vec<ErrorAccumulator>> {
    let ret = retained(trace)?;
    let kernel = problem.kernel();
    let initial_mu = bregman_distance(kernel, &ret.feasibles[0], &ret.anchors[0])?;
    let mut acc = ErrorAccumulator::for_ibpg(initial_mu, ret.feasibles[0].norm());
    let mut snapshots = Vec::with_capacity(trace.rows.len());
    for (k, row) in trace.rows.iter().enumerate() {
        let step_norm = ret.feasibles[k + 1].sub(&ret.feasibles[k]).norm();
        acc.record_ibpg(
            k,
            trace.meta.l,
            row.delta_norm,
            row.mu_measured,
            row.nu_claimed,
            ret.feasibles[k + 1].norm(),
            step_norm,
        );
        snapshots.push(acc.clone());
    }
    Ok(snapshots)
}

/// Verifies the averaged-iterate and last-iterate rate bounds of an iBPG run
/// pointwise at `x = x_star`.
pub fn check_ibpg_bounds<P: Problem>(
    trace: &RunTrace,
    problem: &P,
    x_star: &Point,
    f_star: f64,
) -> Result<IbpgBoundReport> {
    if trace.meta.solver != SolverKind::Ibpg {
        return Err(Error::TraceMismatch("expected an iBPG trace".into()));
    }
    let ret = retained(trace)?;
    let kernel = problem.kernel();
    let l = trace.meta.l;
    let d0 = bregman_distance(kernel, x_star, &ret.anchors[0])?;
    let snapshots = replay_ibpg_accumulator(trace, problem)?;

    let (r, c) = ret.feasibles[0].shape();
    let mut running_sum = DMatrix::zeros(r, c);
    let mut avg_viol = Vec::with_capacity(trace.rows.len());
    let mut last_viol = Vec::with_capacity(trace.rows.len());
    for (k, acc) in snapshots.iter().enumerate() {
        running_sum += ret.feasibles[k + 1].as_matrix();
        let avg = Point::from(&running_sum / (k as f64 + 1.0));
        let lhs_avg = problem.feasible_objective(&avg) - f_star;
        let rhs_avg = acc.ibpg_avg_rhs(k, l, d0, x_star.norm());
        avg_viol.push(rel_violation(lhs_avg, rhs_avg));

        let lhs_last = problem.feasible_objective(&ret.feasibles[k + 1]) - f_star;
        let rhs_last = acc.ibpg_last_rhs(k, l, d0, x_star.norm());
        last_viol.push(rel_violation(lhs_last, rhs_last));
    }
    Ok(IbpgBoundReport {
        averaged: BoundCheck::from_series(avg_viol.into_iter()),
        last_iterate: BoundCheck::from_series(last_viol.into_iter()),
    })
}

/// Verifies the inertial rate bound pointwise at `x = x_star` (where the
/// optimality gap term `e(x)·Σϑ` vanishes), together with the per-iteration
/// Lyapunov inequality it telescopes from.
pub fn check_vibpg_bound<P: Problem>(
    trace: &RunTrace,
    problem: &P,
    x_star: &Point,
    f_star: f64,
) -> Result<VibpgBoundReport> {
    if trace.meta.solver != SolverKind::Vibpg {
        return Err(Error::TraceMismatch("expected a v-iBPG trace".into()));
    }
    let ret = retained(trace)?;
    let kernel = problem.kernel();
    let (l, tau, gamma) = (trace.meta.l, trace.meta.tau, trace.meta.gamma);
    let d0 = bregman_distance(kernel, x_star, &ret.anchors[0])?;
    let alpha = match trace.meta.theta_mode {
        Some(crate::schedules::ThetaMode::ClosedForm { alpha }) => Some(alpha),
        _ => None,
    };

    let mut acc = ErrorAccumulator::for_vibpg();
    let mut rate_viol = Vec::with_capacity(trace.rows.len());
    let mut lyap_viol = Vec::new();
    let x_star_norm = x_star.norm();
    for (k, row) in trace.rows.iter().enumerate() {
        let theta_k = row.theta;
        let theta_prev = if k == 0 { 1.0 } else { trace.rows[k - 1].theta };
        let vartheta_k = theta_prev.powf(-gamma) - (1.0 - theta_k) * theta_k.powf(-gamma);
        acc.record_vibpg(
            theta_k,
            gamma,
            vartheta_k.max(0.0),
            row.delta_norm,
            row.mu_measured,
            row.nu_claimed,
            ret.feasibles[k + 1].norm(),
        );
        let prefactor = match alpha {
            Some(a) => ((a - 1.0) / (k as f64 + a - 1.0)).powf(gamma),
            None => theta_k.powf(gamma),
        };
        let lhs = problem.feasible_objective(&ret.outputs[k + 1]) - f_star;
        let rhs = acc.vibpg_rhs(prefactor, tau, l, d0, x_star_norm, 0.0);
        rate_viol.push(rel_violation(lhs, rhs));

        // Lyapunov step `k → k+1` needs θ_{k+1}; the final row has none.
        // At x = x*, e(x*) = 0 removes the ϑ_{k+1} term.
        if k + 1 < trace.rows.len() {
            let theta_next = trace.rows[k + 1].theta;
            let gap_next = problem.feasible_objective(&ret.outputs[k + 1]) - f_star;
            let gap_cur = problem.feasible_objective(&ret.outputs[k]) - f_star;
            let w_next = (1.0 - theta_next) * theta_next.powf(-gamma);
            let w_cur = (1.0 - theta_k) * theta_k.powf(-gamma);
            let lhs_l = w_next * gap_next
                + tau * l * bregman_distance(kernel, x_star, &ret.anchors[k + 1])?;
            let step = ret.feasibles[k + 1].sub(x_star).norm();
            let rhs_l = w_cur * gap_cur
                + tau * l * bregman_distance(kernel, x_star, &ret.anchors[k])?
                + theta_k.powf(1.0 - gamma) * row.delta_norm * step
                + tau * l * row.mu_measured
                + theta_k.powf(1.0 - gamma) * row.nu_claimed;
            lyap_viol.push(rel_violation(lhs_l, rhs_l));
        }
    }
    Ok(VibpgBoundReport {
        rate_bound: BoundCheck::from_series(rate_viol.into_iter()),
        lyapunov: BoundCheck::from_series(lyap_viol.into_iter()),
    })
}

fn rel_violation(lhs: f64, rhs: f64) -> f64 {
    (lhs - rhs) / (1.0 + lhs.abs() + rhs.abs())
}

/// Compares the analytic gradient against central finite differences at the
/// given interior points; returns the largest relative error.
pub fn gradient_check<P: Problem>(problem: &P, points: &[Point]) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let g = problem.f_grad(x);
        let (r, c) = x.shape();
        let mut g_fd = DMatrix::zeros(r, c);
        for j in 0..c {
            for i in 0..r {
                let h = 1e-6 * (1.0 + x.as_matrix()[(i, j)].abs());
                let mut plus = x.as_matrix().clone();
                let mut minus = x.as_matrix().clone();
                plus[(i, j)] += h;
                minus[(i, j)] -= h;
                g_fd[(i, j)] = (problem.f_eval(&Point::from(plus))
                    - problem.f_eval(&Point::from(minus)))
                    / (2.0 * h);
            }
        }
        let err = (g.as_matrix() - &g_fd).norm() / g.norm().max(1.0);
        worst = worst.max(err);
    }
    worst
}
