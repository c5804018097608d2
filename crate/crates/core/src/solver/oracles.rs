//! Oracles that solve the subproblem in closed form.

use crate::bregman::Point;
use crate::error::{Error, Result};

use super::{InexactCertificate, SubproblemOracle, SubproblemQuery};

/// Exact subproblem oracle for the *quadratic* kernel, backed by a Euclidean
/// projection onto `dom P`. The subproblem
/// `min P(x) + ⟨g, x − y⟩ + (λ/2)‖x − y‖²` is solved by
/// `proj(y − g/λ)`, whose optimality condition matches the inexactness
/// condition with `Δ = 0`, `μ = 0`, `ν = 0`: the method then coincides with
/// the classical proximal gradient iteration.
pub struct ProjectionOracle<F>
where
    F: Fn(&Point) -> Point,
{
    project: F,
}

impl<F> ProjectionOracle<F>
where
    F: Fn(&Point) -> Point,
{
    pub fn new(project: F) -> Self {
        Self { project }
    }
}

impl<F> SubproblemOracle for ProjectionOracle<F>
where
    F: Fn(&Point) -> Point,
{
    fn solve(&mut self, query: &SubproblemQuery) -> Result<InexactCertificate> {
        if query.inner_cap == 0 {
            return Err(Error::OracleBudget { spent: 0 });
        }
        if !(query.lambda > 0.0) {
            return Err(Error::Config(format!(
                "proximal weight must be positive, got {}",
                query.lambda
            )));
        }
        let target = Point::from(
            query.anchor.as_matrix() - query.gradient.as_matrix() / query.lambda,
        );
        let solution = (self.project)(&target);
        Ok(InexactCertificate {
            interior_point: solution.clone(),
            feasible_point: solution,
            delta_norm: 0.0,
            mu_measured: 0.0,
            nu_claimed: 0.0,
            inner_iterations: 1,
        })
    }
}
