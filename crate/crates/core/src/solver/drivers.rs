//! The iBPG and v-iBPG outer loops.

use std::time::Instant;

use crate::bregman::{bregman_distance, Point};
use crate::error::{Error, Result};
use crate::schedules::{ErrorAccumulator, ThetaMode, ThetaSchedule, ToleranceSchedule};

use super::trace::{RetainedIterates, RunMeta, RunTrace, SolverKind, TraceRow};
use super::{
    admit_certificate, Budget, Problem, Reference, RunOptions, StopReason, SubproblemOracle,
    SubproblemQuery, BOX_TOL, FEASIBILITY_TOL,
};

fn normalized_gap(fval: f64, reference: &Option<Reference>) -> f64 {
    match reference {
        Some(r) if r.f_star != 0.0 => (fval - r.f_star).abs() / r.f_star.abs(),
        Some(r) => (fval - r.f_star).abs(),
        None => f64::NAN,
    }
}

struct BudgetGuard {
    budget: Budget,
    started: Instant,
    outer_done: usize,
    inner_done: u64,
}

impl BudgetGuard {
    fn new(budget: Budget) -> Self {
        Self {
            budget,
            started: Instant::now(),
            outer_done: 0,
            inner_done: 0,
        }
    }

    fn exhausted(&self) -> Option<StopReason> {
        if self.outer_done >= self.budget.outer {
            return Some(StopReason::OuterBudget);
        }
        if self.inner_done >= self.budget.inner_total {
            return Some(StopReason::InnerBudget);
        }
        if let Some(wall) = self.budget.wall {
            if self.started.elapsed() >= wall {
                return Some(StopReason::WallClock);
            }
        }
        None
    }

    fn remaining_inner(&self) -> u64 {
        self.budget.inner_total.saturating_sub(self.inner_done)
    }
}

/// Runs the inexact Bregman proximal gradient method from the interior point
/// `x0`. The companion feasible start `x̃⁰` is taken from `x0_feasible` or
/// derived by rounding `x0`. Stops at the first exhausted budget cap or when
/// the oracle runs out of inner iterations.
pub fn ibpg_run<P: Problem, O: SubproblemOracle>(
    problem: &P,
    oracle: &mut O,
    tolerances: &ToleranceSchedule,
    x0: Point,
    x0_feasible: Option<Point>,
    budget: Budget,
    options: &RunOptions,
) -> Result<RunTrace> {
    let kernel = problem.kernel();
    let desc = *problem.smoothness();
    if !kernel.is_interior(&x0) || !desc.restriction.contains(&x0, BOX_TOL) {
        return Err(Error::IterateDomain {
            k: 0,
            reason: "x0 must lie in int dom phi and the restriction box".into(),
        });
    }
    let x_tilde0 = match x0_feasible {
        Some(p) => p,
        None => problem.to_feasible(&x0),
    };
    let feas0 = problem.feasibility_error(&x_tilde0);
    if feas0 > FEASIBILITY_TOL {
        return Err(Error::IterateDomain {
            k: 0,
            reason: format!("companion start violates constraints by {feas0:.3e}"),
        });
    }

    let initial_mu = bregman_distance(kernel, &x_tilde0, &x0)?;
    let mut acc = ErrorAccumulator::for_ibpg(initial_mu, x_tilde0.norm());
    let reference = options.reference.clone();
    let d0 = match &reference {
        Some(r) => bregman_distance(kernel, &r.x_star, &x0)?,
        None => f64::NAN,
    };

    let (nrows, ncols) = x0.shape();
    let mut retained = options.retain_iterates.then(|| RetainedIterates {
        anchors: vec![x0.clone()],
        feasibles: vec![x_tilde0.clone()],
        outputs: Vec::new(),
    });

    let mut guard = BudgetGuard::new(budget);
    let mut rows = Vec::new();
    let mut x = x0;
    let mut x_tilde = x_tilde0;
    let stop;
    loop {
        if let Some(reason) = guard.exhausted() {
            stop = reason;
            break;
        }
        let k = guard.outer_done;
        let (eta_base, mu_tol, nu_tol) = tolerances.tolerance_at(k, None).unwrap_or_else(|_| {
            // Normalized mode: the base sequence is handed to the oracle and
            // the normalized value is enforced at admission below.
            (f64::INFINITY, tolerances.mu.at(k), tolerances.nu.at(k))
        });
        let query = SubproblemQuery {
            gradient: problem.f_grad(&x),
            anchor: x.clone(),
            lambda: desc.l,
            eta_tol: eta_base,
            mu_tol,
            nu_tol,
            inner_cap: guard.remaining_inner(),
        };
        let cert = match oracle.solve(&query) {
            Ok(c) => c,
            Err(Error::OracleBudget { spent }) => {
                guard.inner_done += spent;
                stop = StopReason::InnerBudget;
                break;
            }
            Err(e) => return Err(e),
        };
        let eta_eff = tolerances
            .tolerance_at(k, Some(cert.feasible_point.norm()))?
            .0;
        let mu_measured = admit_certificate(problem, k, &cert, eta_eff, mu_tol, nu_tol)?;
        guard.inner_done += cert.inner_iterations;

        let step_norm = cert.feasible_point.sub(&x_tilde).norm();
        acc.record_ibpg(
            k,
            desc.l,
            cert.delta_norm,
            mu_measured,
            cert.nu_claimed,
            cert.feasible_point.norm(),
            step_norm,
        );

        let fval = problem.feasible_objective(&cert.feasible_point);
        let (rhs_last, rhs_avg) = match &reference {
            Some(r) => (
                acc.ibpg_last_rhs(k, desc.l, d0, r.x_star.norm()),
                acc.ibpg_avg_rhs(k, desc.l, d0, r.x_star.norm()),
            ),
            None => (f64::NAN, f64::NAN),
        };
        rows.push(TraceRow {
            k,
            fval,
            nfval: normalized_gap(fval, &reference),
            mu_measured,
            delta_norm: cert.delta_norm,
            inner_iters: cert.inner_iterations,
            cum_inner_iters: guard.inner_done,
            theta: f64::NAN,
            bound_rhs_last: rhs_last,
            bound_rhs_avg: rhs_avg,
            nu_claimed: cert.nu_claimed,
        });

        x = cert.interior_point;
        x_tilde = cert.feasible_point;
        if let Some(ret) = retained.as_mut() {
            ret.anchors.push(x.clone());
            ret.feasibles.push(x_tilde.clone());
        }
        guard.outer_done += 1;
    }

    Ok(RunTrace {
        meta: RunMeta {
            solver: SolverKind::Ibpg,
            instance: options.instance.clone(),
            nrows,
            ncols,
            l: desc.l,
            tau: desc.tau,
            gamma: desc.gamma,
            theta_mode: None,
            tolerances: *tolerances,
            seed: options.seed,
            f_star: reference.map(|r| r.f_star),
            budget_outer: budget.outer as u64,
            budget_inner: budget.inner_total,
        },
        rows,
        stop,
        retained,
    })
}

/// Runs the inertial variant. `x0` must be feasible, `z0` interior; with
/// `θ_0 = 1` the first extrapolated point coincides with `z0`.
pub fn vibpg_run<P: Problem, O: SubproblemOracle>(
    problem: &P,
    oracle: &mut O,
    theta: &mut ThetaSchedule,
    tolerances: &ToleranceSchedule,
    x0: Point,
    z0: Point,
    budget: Budget,
    options: &RunOptions,
) -> Result<RunTrace> {
    let kernel = problem.kernel();
    let desc = *problem.smoothness();
    if (theta.gamma - desc.gamma).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "theta schedule gamma {} does not match the problem exponent {}",
            theta.gamma, desc.gamma
        )));
    }
    let feas0 = problem.feasibility_error(&x0);
    if feas0 > FEASIBILITY_TOL || !kernel.is_in_domain(&x0) {
        return Err(Error::IterateDomain {
            k: 0,
            reason: format!("x0 must be feasible; constraint violation {feas0:.3e}"),
        });
    }
    if !kernel.is_interior(&z0) || !desc.restriction.contains(&z0, BOX_TOL) {
        return Err(Error::IterateDomain {
            k: 0,
            reason: "z0 must lie in int dom phi and the restriction box".into(),
        });
    }

    let mut acc = ErrorAccumulator::for_vibpg();
    let reference = options.reference.clone();
    let d0 = match &reference {
        Some(r) => bregman_distance(kernel, &r.x_star, &z0)?,
        None => f64::NAN,
    };

    let (nrows, ncols) = x0.shape();
    let mut retained = options.retain_iterates.then(|| RetainedIterates {
        anchors: vec![z0.clone()],
        feasibles: vec![x0.clone()],
        outputs: vec![x0.clone()],
    });

    let mut guard = BudgetGuard::new(budget);
    let mut rows = Vec::new();
    let mut x = x0;
    let mut z = z0;
    let stop;
    loop {
        if let Some(reason) = guard.exhausted() {
            stop = reason;
            break;
        }
        let k = guard.outer_done;
        let theta_k = theta.theta(k as i64);
        let vartheta_k = theta.vartheta(k)?;
        let y = x.interpolate(&z, theta_k);
        let lambda = desc.tau * desc.l * theta_k.powf(desc.gamma - 1.0);
        let (eta_base, mu_tol, nu_tol) = tolerances.tolerance_at(k, None).unwrap_or_else(|_| {
            (f64::INFINITY, tolerances.mu.at(k), tolerances.nu.at(k))
        });
        let query = SubproblemQuery {
            gradient: problem.f_grad(&y),
            anchor: z.clone(),
            lambda,
            eta_tol: eta_base,
            mu_tol,
            nu_tol,
            inner_cap: guard.remaining_inner(),
        };
        let cert = match oracle.solve(&query) {
            Ok(c) => c,
            Err(Error::OracleBudget { spent }) => {
                guard.inner_done += spent;
                stop = StopReason::InnerBudget;
                break;
            }
            Err(e) => return Err(e),
        };
        let eta_eff = tolerances
            .tolerance_at(k, Some(cert.feasible_point.norm()))?
            .0;
        let mu_measured = admit_certificate(problem, k, &cert, eta_eff, mu_tol, nu_tol)?;
        guard.inner_done += cert.inner_iterations;

        let x_next = x.interpolate(&cert.feasible_point, theta_k);
        acc.record_vibpg(
            theta_k,
            desc.gamma,
            vartheta_k,
            cert.delta_norm,
            mu_measured,
            cert.nu_claimed,
            cert.feasible_point.norm(),
        );

        let fval = problem.feasible_objective(&x_next);
        let rhs_last = match &reference {
            Some(r) => {
                let prefactor = match theta.mode {
                    ThetaMode::ClosedForm { alpha } => {
                        ((alpha - 1.0) / (k as f64 + alpha - 1.0)).powf(desc.gamma)
                    }
                    _ => theta_k.powf(desc.gamma),
                };
                acc.vibpg_rhs(prefactor, desc.tau, desc.l, d0, r.x_star.norm(), 0.0)
            }
            None => f64::NAN,
        };
        rows.push(TraceRow {
            k,
            fval,
            nfval: normalized_gap(fval, &reference),
            mu_measured,
            delta_norm: cert.delta_norm,
            inner_iters: cert.inner_iterations,
            cum_inner_iters: guard.inner_done,
            theta: theta_k,
            bound_rhs_last: rhs_last,
            bound_rhs_avg: f64::NAN,
            nu_claimed: cert.nu_claimed,
        });

        z = cert.interior_point;
        x = x_next;
        if let Some(ret) = retained.as_mut() {
            ret.anchors.push(z.clone());
            ret.feasibles.push(cert.feasible_point.clone());
            ret.outputs.push(x.clone());
        }
        guard.outer_done += 1;
    }

    Ok(RunTrace {
        meta: RunMeta {
            solver: SolverKind::Vibpg,
            instance: options.instance.clone(),
            nrows,
            ncols,
            l: desc.l,
            tau: desc.tau,
            gamma: desc.gamma,
            theta_mode: Some(theta.mode),
            tolerances: *tolerances,
            seed: options.seed,
            f_star: reference.map(|r| r.f_star),
            budget_outer: budget.outer as u64,
            budget_inner: budget.inner_total,
        },
        rows,
        stop,
        retained,
    })
}
