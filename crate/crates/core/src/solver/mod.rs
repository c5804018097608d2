//! The inexact Bregman proximal gradient driver and its inertial variant,
//! generic over a problem definition and a subproblem oracle.
//!
//! Each outer iteration asks the oracle for a *pair* of points: an interior
//! point (where the kernel gradient was taken) and a feasible point (where the
//! constraints hold exactly), together with the measured optimality residual
//! `‖Δ‖`, the Bregman deviation `D_φ(feasible, interior)` and the claimed
//! ν-subdifferential slack. The driver re-checks the certificate on admission
//! and records everything needed to verify the convergence bounds afterwards.

mod bounds;
mod drivers;
mod oracles;
mod trace;

pub use bounds::{
    averaged_iterate, check_descent_inequality, check_ibpg_bounds, check_vibpg_bound,
    gradient_check, BoundCheck, DescentReport, IbpgBoundReport, VibpgBoundReport,
};
pub use drivers::{ibpg_run, vibpg_run};
pub use oracles::ProjectionOracle;
pub use trace::{
    read_trace_csv, RetainedIterates, RunMeta, RunTrace, SolverKind, TraceRow, TraceSidecar,
};

use std::time::Duration;

use crate::bregman::{bregman_distance, Kernel, Point, SmoothnessDescriptor};
use crate::error::{Error, Result};

/// Feasible points must satisfy the constraints of `P` to this tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Membership tolerance for the restriction box 𝒳.
pub const BOX_TOL: f64 = 1e-9;

/// A composite problem `F = P + f` together with its kernel and smoothness
/// data. `P` is typically an indicator; its value is never requested at
/// interior points, which in general violate the constraints.
pub trait Problem {
    fn f_eval(&self, x: &Point) -> f64;
    fn f_grad(&self, x: &Point) -> Point;

    /// Extended-real value of the nonsmooth part.
    fn p_eval(&self, x: &Point) -> f64;

    /// `F` evaluated at a point of `dom P ∩ dom φ`; implementations for
    /// indicator-type `P` return just `f`.
    fn feasible_objective(&self, x: &Point) -> f64;

    /// Violation of `P`'s constraints (0 on `dom P`); used to admit the
    /// feasible half of a certificate.
    fn feasibility_error(&self, x: &Point) -> f64;

    /// Maps an arbitrary point of the kernel domain to a feasible one
    /// (rounding/projection); used to derive the companion starting point.
    fn to_feasible(&self, x: &Point) -> Point;

    fn kernel(&self) -> &Kernel;
    fn smoothness(&self) -> &SmoothnessDescriptor;
}

/// One subproblem instance:
/// `min_x P(x) + ⟨gradient, x⟩ + lambda · D_φ(x, anchor)`.
#[derive(Clone, Debug)]
pub struct SubproblemQuery {
    /// `∇f` evaluated at the current gradient point (the anchor for iBPG, the
    /// extrapolated point for v-iBPG).
    pub gradient: Point,
    /// Bregman center of the proximal term; strictly interior.
    pub anchor: Point,
    /// Proximal weight: `L` for iBPG, `τLθ_k^{γ−1}` for v-iBPG.
    pub lambda: f64,
    pub eta_tol: f64,
    pub mu_tol: f64,
    pub nu_tol: f64,
    /// Remaining inner-iteration allowance for this call.
    pub inner_cap: u64,
}

/// The two-point witness returned by an oracle.
#[derive(Clone, Debug)]
pub struct InexactCertificate {
    /// In `int dom φ ∩ 𝒳`; generally violates `P`'s constraints.
    pub interior_point: Point,
    /// In `dom P ∩ dom φ`; satisfies the constraints exactly.
    pub feasible_point: Point,
    /// Measured norm of the residual on the optimality condition.
    pub delta_norm: f64,
    /// Measured `D_φ(feasible_point, interior_point)`.
    pub mu_measured: f64,
    /// Claimed ν-subdifferential slack.
    pub nu_claimed: f64,
    pub inner_iterations: u64,
}

/// An inexact subproblem solver. One instance serves one solver run.
pub trait SubproblemOracle {
    fn solve(&mut self, query: &SubproblemQuery) -> Result<InexactCertificate>;
}

/// Three independent caps; the first one reached stops the run.
#[derive(Clone, Copy, Debug)]
pub struct Budget {
    pub outer: usize,
    pub inner_total: u64,
    pub wall: Option<Duration>,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            outer: usize::MAX,
            inner_total: 500_000,
            wall: None,
        }
    }
}

impl Budget {
    pub fn outer_only(outer: usize) -> Self {
        Self {
            outer,
            inner_total: u64::MAX,
            wall: None,
        }
    }
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    OuterBudget,
    InnerBudget,
    WallClock,
}

/// A known (approximately) optimal solution used for normalized gaps and
/// bound right-hand sides.
#[derive(Clone, Debug)]
pub struct Reference {
    pub x_star: Point,
    pub f_star: f64,
}

/// Per-run switches.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Keep every iterate in memory so the inequality checkers can replay the
    /// run. Off by default: a dense run at n = 100 over 10⁴ iterations is
    /// large.
    pub retain_iterates: bool,
    pub reference: Option<Reference>,
    /// Recorded in the trace metadata for reproducibility.
    pub seed: u64,
    /// Instance label recorded in the metadata.
    pub instance: String,
}

/// Re-checks a certificate against the tolerances and the domain split:
/// the interior point must lie in `int dom φ ∩ 𝒳` and the feasible point in
/// `dom P ∩ dom φ`. The Bregman deviation is recomputed here rather than
/// trusted from the oracle.
pub(crate) fn admit_certificate<P: Problem>(
    problem: &P,
    k: usize,
    cert: &InexactCertificate,
    eta_tol: f64,
    mu_tol: f64,
    nu_tol: f64,
) -> Result<f64> {
    let kernel = problem.kernel();
    let desc = problem.smoothness();
    if !kernel.is_interior(&cert.interior_point) {
        return Err(Error::IterateDomain {
            k,
            reason: "interior point is not strictly inside the kernel domain".into(),
        });
    }
    if !desc.restriction.contains(&cert.interior_point, BOX_TOL) {
        return Err(Error::IterateDomain {
            k,
            reason: "interior point left the restriction box".into(),
        });
    }
    if !kernel.is_in_domain(&cert.feasible_point) {
        return Err(Error::IterateDomain {
            k,
            reason: "feasible point is not in the kernel domain".into(),
        });
    }
    let feas = problem.feasibility_error(&cert.feasible_point);
    if feas > FEASIBILITY_TOL {
        return Err(Error::CertificateViolation {
            k,
            reason: format!("feasible point violates constraints by {feas:.3e}"),
        });
    }
    let mu = bregman_distance(kernel, &cert.feasible_point, &cert.interior_point)?;
    let slack = |tol: f64| tol + 1e-15 * (1.0 + tol);
    if mu > slack(mu_tol) {
        return Err(Error::CertificateViolation {
            k,
            reason: format!("measured D_phi = {mu:.6e} exceeds mu tolerance {mu_tol:.6e}"),
        });
    }
    if cert.delta_norm > slack(eta_tol) {
        return Err(Error::CertificateViolation {
            k,
            reason: format!(
                "residual norm {delta:.6e} exceeds eta tolerance {eta_tol:.6e}",
                delta = cert.delta_norm
            ),
        });
    }
    if cert.nu_claimed > slack(nu_tol) {
        return Err(Error::CertificateViolation {
            k,
            reason: format!(
                "nu slack {nu:.6e} exceeds tolerance {nu_tol:.6e}",
                nu = cert.nu_claimed
            ),
        });
    }
    Ok(mu)
}
