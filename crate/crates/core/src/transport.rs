//! The inexact subproblem oracle for the entropy-kernel application:
//! log-stabilized Sinkhorn scaling for
//! `min ⟨M, X⟩ + ε Σ x_ij (log x_ij − 1)  s.t.  Xe = e, Xᵀe = e`,
//! a rounding map onto the transportation polytope, and assembly of the
//! two-point inexactness certificate.
//!
//! All production iterations run in the log domain with log-sum-exp
//! stabilization: the inertial solver drives `ε = τLθ_k^{γ−1}` toward zero,
//! where the direct form `Ξ = e^{−M/ε}` would overflow. The direct form is
//! kept only as a reference path for the equivalence test.

use nalgebra::{DMatrix, DVector};

use crate::bregman::{Kernel, Point};
use crate::error::{Error, Result};
use crate::solver::{InexactCertificate, SubproblemOracle, SubproblemQuery};

/// Anchor entries are clamped here before taking logs; iterates stay strictly
/// positive analytically, so this guards underflow only.
pub const ANCHOR_FLOOR: f64 = 1e-300;

/// One entropic-regularized transport subproblem, stored in the log domain.
#[derive(Clone, Debug)]
pub struct TransportSubproblem {
    /// `M = C − ε·log S`.
    pub m: DMatrix<f64>,
    pub epsilon: f64,
    pub n: usize,
    /// `log Ξ = −M/ε`.
    pub log_xi: DMatrix<f64>,
}

impl TransportSubproblem {
    /// Builds the subproblem from the linear cost `C` (the gradient of the
    /// smooth part), the strictly positive Bregman anchor `S`, and `ε > 0`.
    pub fn new(cost: &DMatrix<f64>, anchor: &DMatrix<f64>, epsilon: f64) -> Result<Self> {
        let n = cost.nrows();
        if cost.ncols() != n || anchor.nrows() != n || anchor.ncols() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("square {n}x{n}"),
                got: format!("{}x{} vs {}x{}", cost.nrows(), cost.ncols(), anchor.nrows(), anchor.ncols()),
            });
        }
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        let m = DMatrix::from_fn(n, n, |i, j| {
            cost[(i, j)] - epsilon * anchor[(i, j)].max(ANCHOR_FLOOR).ln()
        });
        for v in m.iter() {
            if !v.is_finite() {
                return Err(Error::Config("transport cost matrix has non-finite entries".into()));
            }
        }
        let log_xi = m.map(|v| -v / epsilon);
        Ok(Self { m, epsilon, n, log_xi })
    }
}

/// Dual scaling vectors in the log domain plus the inner-iteration counter.
#[derive(Clone, Debug)]
pub struct ScalingState {
    pub log_u: DVector<f64>,
    pub log_v: DVector<f64>,
    pub t: u64,
}

impl ScalingState {
    /// Cold start: `v = e` (and `u = e`, immediately overwritten by the first
    /// u-update).
    pub fn cold(n: usize) -> Self {
        Self {
            log_u: DVector::zeros(n),
            log_v: DVector::zeros(n),
            t: 0,
        }
    }

    fn is_finite(&self) -> bool {
        self.log_u.iter().all(|v| v.is_finite()) && self.log_v.iter().all(|v| v.is_finite())
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// One full Sinkhorn update (`u` then `v`) in the log domain with per-row
/// max subtraction; increments the iteration counter.
pub fn sinkhorn_step(sub: &TransportSubproblem, state: &mut ScalingState) -> Result<()> {
    if !state.is_finite() {
        return Err(Error::Config("Sinkhorn state contains non-finite values".into()));
    }
    let n = sub.n;
    // u-update: log u_i = −log Σ_j exp(log Ξ_ij + log v_j)
    for i in 0..n {
        let lse = log_sum_exp((0..n).map(|j| sub.log_xi[(i, j)] + state.log_v[j]));
        state.log_u[i] = -lse;
    }
    // v-update: log v_j = −log Σ_i exp(log Ξ_ij + log u_i)
    for j in 0..n {
        let lse = log_sum_exp((0..n).map(|i| sub.log_xi[(i, j)] + state.log_u[i]));
        state.log_v[j] = -lse;
    }
    state.t += 1;
    Ok(())
}

/// `X = Diag(u) Ξ Diag(v)`, assembled as `exp(log u_i + log Ξ_ij + log v_j)`;
/// strictly positive by construction.
pub fn assemble_plan(sub: &TransportSubproblem, state: &ScalingState) -> DMatrix<f64> {
    DMatrix::from_fn(sub.n, sub.n, |i, j| {
        (state.log_u[i] + sub.log_xi[(i, j)] + state.log_v[j]).exp()
    })
}

/// Reference implementation in linear space (`Ξ = e^{−M/ε}` directly); valid
/// only for well-scaled inputs and used to cross-check the log-domain path.
pub fn sinkhorn_plan_direct(sub: &TransportSubproblem, steps: u64) -> DMatrix<f64> {
    let n = sub.n;
    let xi = sub.log_xi.map(f64::exp);
    let mut u = DVector::from_element(n, 1.0);
    let mut v = DVector::from_element(n, 1.0);
    for _ in 0..steps {
        let xv = &xi * &v;
        u = xv.map(|w| 1.0 / w);
        let xtu = xi.transpose() * &u;
        v = xtu.map(|w| 1.0 / w);
    }
    DMatrix::from_fn(n, n, |i, j| u[i] * xi[(i, j)] * v[j])
}

/// Rounds a positive matrix onto `Ω = {X ≥ 0, Xe = e, Xᵀe = e}`:
/// cap row sums at one, then column sums, then repair the remaining deficit
/// with a rank-one correction. Row and column sums of the output are exact to
/// working precision and the output moves at most
/// `2(‖Xe − e‖₁ + ‖Xᵀe − e‖₁)` in entrywise ℓ₁.
pub fn round_to_polytope(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: "square".into(),
            got: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    if x.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Config("rounding requires strictly positive entries".into()));
    }
    let mut out = x.clone();
    for i in 0..n {
        let r: f64 = out.row(i).sum();
        let scale = (1.0 / r).min(1.0);
        if scale < 1.0 {
            for j in 0..n {
                out[(i, j)] *= scale;
            }
        }
    }
    for j in 0..n {
        let c: f64 = out.column(j).sum();
        let scale = (1.0 / c).min(1.0);
        if scale < 1.0 {
            for i in 0..n {
                out[(i, j)] *= scale;
            }
        }
    }
    let mut err_r = DVector::zeros(n);
    let mut err_c = DVector::zeros(n);
    for i in 0..n {
        err_r[i] = 1.0 - out.row(i).sum();
    }
    for j in 0..n {
        err_c[j] = 1.0 - out.column(j).sum();
    }
    let total: f64 = err_r.sum();
    if total.abs() > 0.0 {
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += err_r[i] * err_c[j] / total;
            }
        }
    }
    Ok(out)
}

/// Residual of the optimality condition at an accepted plan:
/// `R = C + ε(log X − log S) = M + ε·log X` must be of the additive form
/// `a_i + b_j`; returns the norm left after removing the best additive fit,
/// relative to the residual magnitude.
pub fn subgradient_residual(sub: &TransportSubproblem, plan: &DMatrix<f64>) -> f64 {
    let n = sub.n;
    let r = DMatrix::from_fn(n, n, |i, j| sub.m[(i, j)] + sub.epsilon * plan[(i, j)].ln());
    let grand = r.sum() / (n * n) as f64;
    let row_means: Vec<f64> = (0..n).map(|i| r.row(i).sum() / n as f64).collect();
    let col_means: Vec<f64> = (0..n).map(|j| r.column(j).sum() / n as f64).collect();
    let mut resid = 0.0_f64;
    let mut scale = 1.0_f64;
    for i in 0..n {
        for j in 0..n {
            let fit = row_means[i] + col_means[j] - grand;
            resid += (r[(i, j)] - fit).powi(2);
            scale = scale.max(r[(i, j)].abs());
        }
    }
    resid.sqrt() / scale
}

/// Sinkhorn-backed subproblem oracle. Cold start (`v = e`) is the default;
/// with `warm_start` the scaling vectors of the previous outer iteration seed
/// the next one. The stopping rule and the certificate check the *same*
/// quantity, `D_φ(G_Ω(X), X)`, every `check_every` steps — evaluating it
/// costs about as much as a Sinkhorn step, so checking each step would
/// roughly double the inner cost.
pub struct SinkhornOracle {
    pub check_every: u64,
    pub warm_start: bool,
    state: Option<ScalingState>,
    kernel: Kernel,
}

impl Default for SinkhornOracle {
    fn default() -> Self {
        Self::new(10, false)
    }
}

impl SinkhornOracle {
    pub fn new(check_every: u64, warm_start: bool) -> Self {
        Self {
            check_every: check_every.max(1),
            warm_start,
            state: None,
            kernel: Kernel::entropy(),
        }
    }
}

impl SubproblemOracle for SinkhornOracle {
    fn solve(&mut self, query: &SubproblemQuery) -> Result<InexactCertificate> {
        let sub = TransportSubproblem::new(
            query.gradient.as_matrix(),
            query.anchor.as_matrix(),
            query.lambda,
        )?;
        let mut state = match (self.warm_start, self.state.take()) {
            (true, Some(s)) if s.log_u.len() == sub.n => ScalingState { t: 0, ..s },
            _ => ScalingState::cold(sub.n),
        };
        let mut spent: u64 = 0;
        loop {
            if spent >= query.inner_cap {
                return Err(Error::OracleBudget { spent });
            }
            let block = self.check_every.min(query.inner_cap - spent);
            for _ in 0..block {
                sinkhorn_step(&sub, &mut state)?;
            }
            spent += block;
            let plan = assemble_plan(&sub, &state);
            let rounded = round_to_polytope(&plan)?;
            let interior = Point::new(plan)?;
            let feasible = Point::new(rounded)?;
            let deviation = self.kernel.distance(&feasible, &interior)?;
            if deviation <= query.mu_tol {
                debug_assert!(
                    subgradient_residual(&sub, interior.as_matrix()) <= 1e-9,
                    "optimality residual lost its additive structure"
                );
                if self.warm_start {
                    self.state = Some(state);
                }
                return Ok(InexactCertificate {
                    interior_point: interior,
                    feasible_point: feasible,
                    delta_norm: 0.0,
                    mu_measured: deviation,
                    nu_claimed: 0.0,
                    inner_iterations: spent,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_sub(n: usize, epsilon: f64) -> TransportSubproblem {
        let zero = DMatrix::zeros(n, n);
        let ones = DMatrix::from_element(n, n, 1.0);
        TransportSubproblem::new(&zero, &ones, epsilon).unwrap()
    }

    #[test]
    fn zero_cost_fixed_point_is_uniform() {
        let sub = uniform_sub(3, 1.0);
        let mut state = ScalingState::cold(3);
        for _ in 0..50 {
            sinkhorn_step(&sub, &mut state).unwrap();
        }
        let plan = assemble_plan(&sub, &state);
        for v in plan.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12, "entry {v}");
        }
    }

    #[test]
    fn row_marginals_exact_after_u_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4;
        let cost = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let anchor = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.1..1.0));
        let sub = TransportSubproblem::new(&cost, &anchor, 0.7).unwrap();
        let mut state = ScalingState::cold(n);
        // Apply only the u-half of the update, then check row sums against
        // the previous v.
        for i in 0..n {
            let lse = log_sum_exp((0..n).map(|j| sub.log_xi[(i, j)] + state.log_v[j]));
            state.log_u[i] = -lse;
        }
        let plan = assemble_plan(&sub, &state);
        for i in 0..n {
            let r: f64 = plan.row(i).sum();
            assert!((r - 1.0).abs() <= 1e-13, "row {i} sum {r}");
        }
        // And column marginals after the full step.
        let mut state = ScalingState::cold(n);
        sinkhorn_step(&sub, &mut state).unwrap();
        let plan = assemble_plan(&sub, &state);
        for j in 0..n {
            let c: f64 = plan.column(j).sum();
            assert!((c - 1.0).abs() <= 1e-13, "col {j} sum {c}");
        }
    }

    #[test]
    fn assemble_with_zero_scalings_returns_gibbs_matrix() {
        let sub = uniform_sub(3, 0.5);
        let state = ScalingState::cold(3);
        let plan = assemble_plan(&sub, &state);
        let xi = sub.log_xi.map(f64::exp);
        assert!((plan - xi).norm() < 1e-15);
    }

    #[test]
    fn plan_entries_always_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let cost = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-3.0..3.0));
        let anchor = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.05..1.0));
        let sub = TransportSubproblem::new(&cost, &anchor, 0.2).unwrap();
        let mut state = ScalingState::cold(n);
        for _ in 0..25 {
            sinkhorn_step(&sub, &mut state).unwrap();
        }
        assert!(assemble_plan(&sub, &state).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn rounding_fixes_nothing_on_feasible_input() {
        let n = 4;
        let x = DMatrix::from_element(n, n, 1.0 / n as f64);
        let rounded = round_to_polytope(&x).unwrap();
        assert!((rounded - x).norm() < 1e-15);
    }

    #[test]
    fn rounding_all_ones_gives_uniform() {
        let n = 5;
        let x = DMatrix::from_element(n, n, 1.0);
        let rounded = round_to_polytope(&x).unwrap();
        for v in rounded.iter() {
            assert!((v - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn rounding_feasibility_and_l1_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = 6;
            let x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.01..0.5));
            let rounded = round_to_polytope(&x).unwrap();
            let mut marg_err: f64 = 0.0;
            for i in 0..n {
                marg_err = marg_err.max((rounded.row(i).sum() - 1.0).abs());
                marg_err = marg_err.max((rounded.column(i).sum() - 1.0).abs());
            }
            assert!(marg_err <= 1e-12, "marginal error {marg_err}");
            assert!(rounded.iter().all(|&v| v >= 0.0));
            let moved: f64 = (&rounded - &x).iter().map(|v| v.abs()).sum();
            let mut row_gap = 0.0;
            let mut col_gap = 0.0;
            for i in 0..n {
                row_gap += (x.row(i).sum() - 1.0).abs();
                col_gap += (x.column(i).sum() - 1.0).abs();
            }
            assert!(moved <= 2.0 * (row_gap + col_gap) + 1e-12);
        }
    }

    #[test]
    fn rounding_rejects_nonpositive_entries() {
        let mut x = DMatrix::from_element(3, 3, 0.5);
        x[(1, 1)] = 0.0;
        assert!(round_to_polytope(&x).is_err());
    }

    #[test]
    fn log_domain_matches_direct_form_when_well_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 4;
        let cost = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
        let anchor = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.2..1.0));
        let sub = TransportSubproblem::new(&cost, &anchor, 0.5).unwrap();
        assert!(sub.log_xi.iter().all(|v| v.abs() <= 30.0), "test setup must stay well-scaled");
        let steps = 40;
        let direct = sinkhorn_plan_direct(&sub, steps);
        let mut state = ScalingState::cold(n);
        for _ in 0..steps {
            sinkhorn_step(&sub, &mut state).unwrap();
        }
        let logdom = assemble_plan(&sub, &state);
        for (a, b) in logdom.iter().zip(direct.iter()) {
            assert!((a - b).abs() <= 1e-10, "log {a} vs direct {b}");
        }
    }

    #[test]
    fn deviation_driven_below_tight_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 5;
        let cost = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let anchor = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.1..1.0));
        let sub = TransportSubproblem::new(&cost, &anchor, 0.3).unwrap();
        let kernel = Kernel::entropy();
        let mut state = ScalingState::cold(n);
        let mut reached = false;
        for _ in 0..20_000 {
            sinkhorn_step(&sub, &mut state).unwrap();
            let plan = assemble_plan(&sub, &state);
            let rounded = round_to_polytope(&plan).unwrap();
            let d = kernel
                .distance(&Point::new(rounded).unwrap(), &Point::new(plan).unwrap())
                .unwrap();
            if d <= 1e-11 {
                reached = true;
                break;
            }
        }
        assert!(reached, "deviation never dropped below 1e-11");
    }
}
