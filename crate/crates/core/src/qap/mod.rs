//! QAP instance ingestion, the convex quadratic relaxation
//! `min ⟨X, H(X)⟩ over the doubly stochastic polytope` with
//! `H(X) = AXB − SX − XT`, and an independent reference solver for the
//! optimal value.

mod lap;
mod reference;

pub use lap::{solve_assignment, AssignmentSolution};
pub use reference::{dykstra_project, project_affine, reference_solve, ReferenceSolution};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bregman::{BoxSet, Kernel, Point, SmoothnessDescriptor};
use crate::error::{Error, Result};
use crate::transport::round_to_polytope;

/// A parsed flow/distance pair, symmetrized on load.
#[derive(Clone, Debug)]
pub struct QapInstance {
    pub n: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub name: String,
}

/// Plain-text instance format: first token `n`, then `n²` entries of the flow
/// matrix row-major, then `n²` entries of the distance matrix. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_qaplib(text: &str, name: &str) -> Result<QapInstance> {
    let mut tokens = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        for tok in trimmed.split_whitespace() {
            tokens.push(tok);
        }
    }
    if tokens.is_empty() {
        return Err(Error::Parse("empty instance file".into()));
    }
    let n: usize = tokens[0]
        .parse()
        .map_err(|_| Error::Parse(format!("dimension token '{}' is not an integer", tokens[0])))?;
    if n <= 1 {
        return Err(Error::Parse(format!("dimension must be at least 2, got {n}")));
    }
    let expected = 1 + 2 * n * n;
    if tokens.len() != expected {
        return Err(Error::Parse(format!(
            "expected {expected} tokens for n = {n}, found {}",
            tokens.len()
        )));
    }
    let mut values = Vec::with_capacity(2 * n * n);
    for tok in &tokens[1..] {
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::Parse(format!("non-numeric token '{tok}'")))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("non-finite entry '{tok}'")));
        }
        values.push(v);
    }
    let a = DMatrix::from_row_slice(n, n, &values[..n * n]);
    let b = DMatrix::from_row_slice(n, n, &values[n * n..]);
    let symmetrize = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
    Ok(QapInstance {
        n,
        a: symmetrize(&a),
        b: symmetrize(&b),
        name: name.to_string(),
    })
}

/// How `S` and `T` are derived from the spectra of `A` and `B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StMode {
    /// Optimal duals of the assignment LP with cost `λ_i ω_j`: maximizes
    /// `Σs + Σt` subject to the positive-semidefiniteness margin
    /// `λ_i ω_j − s_i − t_j ≥ 0`.
    LapDuals,
    /// `S = T = 0`; valid only when both input matrices are PSD. Testing aid.
    Zero,
}

/// The assembled relaxation: spectra, the `S`/`T` shift matrices, the
/// operator norm estimate, and the smoothness constant `L = 2‖H‖`.
#[derive(Clone, Debug)]
pub struct QapProblem {
    pub instance: QapInstance,
    pub s: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub omega: DVector<f64>,
    pub s_dual: DVector<f64>,
    pub t_dual: DVector<f64>,
    pub norm_h: f64,
    pub l: f64,
    pub psd_margin: f64,
}

fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .ok_or(())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    Ok((vectors, values))
}

/// Builds the relaxation: eigendecompose `A` and `B`, derive `(s, t)` from the
/// assignment duals on the eigenvalue products, assemble `S`, `T`, certify the
/// PSD margin, and estimate `‖H‖` by power iteration (deterministic seed-0
/// start, relative tolerance 1e-8, 5000-iteration cap).
pub fn build_relaxation(instance: QapInstance, mode: StMode) -> Result<QapProblem> {
    let n = instance.n;
    let (va, lambda) = sorted_symmetric_eigen(&instance.a)?;
    let (ub, omega) = sorted_symmetric_eigen(&instance.b)?;

    let (s_dual, t_dual) = match mode {
        StMode::LapDuals => {
            let cost = DMatrix::from_fn(n, n, |i, j| lambda[i] * omega[j]);
            let sol = lap::solve_assignment(&cost)?;
            (DVector::from_vec(sol.u), DVector::from_vec(sol.v))
        }
        StMode::Zero => (DVector::zeros(n), DVector::zeros(n)),
    };

    let s = &va * DMatrix::from_diagonal(&s_dual) * va.transpose();
    let t = &ub * DMatrix::from_diagonal(&t_dual) * ub.transpose();

    // H's spectrum in the basis v_i u_jᵀ is exactly {λ_i ω_j − s_i − t_j}.
    let mut psd_margin = f64::INFINITY;
    let mut product_scale = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            psd_margin = psd_margin.min(lambda[i] * omega[j] - s_dual[i] - t_dual[j]);
            product_scale = product_scale.max((lambda[i] * omega[j]).abs());
        }
    }
    let scale = 1.0 + product_scale;
    if psd_margin < -1e-9 * scale {
        return Err(Error::Config(format!(
            "relaxation is not positive semidefinite: margin {psd_margin:.3e} (scale {scale:.3e})"
        )));
    }

    let mut problem = QapProblem {
        instance,
        s,
        t,
        lambda,
        omega,
        s_dual,
        t_dual,
        norm_h: 0.0,
        l: 0.0,
        psd_margin,
    };
    problem.norm_h = operator_norm(&problem, 1e-8, 5000);
    problem.l = 2.0 * problem.norm_h;

    // Sampled PSD sanity check on the assembled operator.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..32 {
        let x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0));
        let q = quadratic_form(&problem, &x);
        let q_scale = 1.0 + (problem.norm_h + 1.0) * x.norm().powi(2);
        if q < -1e-9 * q_scale {
            return Err(Error::Config(format!(
                "sampled quadratic form is negative: {q:.3e}"
            )));
        }
    }
    Ok(problem)
}

/// `H(X) = AXB − SX − XT`.
pub fn apply_h(problem: &QapProblem, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = problem.instance.n;
    if x.nrows() != n || x.ncols() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", x.nrows(), x.ncols()),
        });
    }
    Ok(&problem.instance.a * x * &problem.instance.b - &problem.s * x - x * &problem.t)
}

fn quadratic_form(problem: &QapProblem, x: &DMatrix<f64>) -> f64 {
    apply_h(problem, x).expect("shape checked by caller").dot(x)
}

/// `f(X) = ⟨X, H(X)⟩` and `∇f(X) = 2H(X)`.
pub fn objective_and_gradient(problem: &QapProblem, x: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let hx = apply_h(problem, x)?;
    Ok((hx.dot(x), hx * 2.0))
}

/// Largest eigenvalue of the self-adjoint PSD operator `X ↦ H(X)` via power
/// iteration on the matrix space, with a fixed seed-0 start.
fn operator_norm(problem: &QapProblem, tol: f64, cap: usize) -> f64 {
    power_iteration_norm(problem, tol, cap)
}

/// Exposed with an adjustable tolerance for the self-consistency check.
pub fn power_iteration_norm(problem: &QapProblem, tol: f64, cap: usize) -> f64 {
    let n = problem.instance.n;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut v = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v /= norm;
    let mut estimate = 0.0_f64;
    for _ in 0..cap {
        let w = apply_h(problem, &v).expect("square by construction");
        let new_estimate = w.dot(&v);
        let w_norm = w.norm();
        if w_norm <= f64::MIN_POSITIVE {
            return 0.0;
        }
        v = w / w_norm;
        if (new_estimate - estimate).abs() <= tol * new_estimate.abs().max(1.0) {
            return new_estimate.max(0.0);
        }
        estimate = new_estimate;
    }
    estimate.max(0.0)
}

/// Normalized optimality gap at the rounded point:
/// `|⟨G(X), H(G(X))⟩ − f*| / |f*|`, or the absolute gap when `f* = 0`.
pub fn nfval(problem: &QapProblem, x: &DMatrix<f64>, f_star: f64) -> Result<f64> {
    let floored = x.map(|v| v.max(crate::transport::ANCHOR_FLOOR));
    let rounded = round_to_polytope(&floored)?;
    let (value, _) = objective_and_gradient(problem, &rounded)?;
    if f_star != 0.0 {
        Ok((value - f_star).abs() / f_star.abs())
    } else {
        Ok((value - f_star).abs())
    }
}

/// The relaxation as a composite problem over the entropy kernel:
/// `P = δ_{affine marginals}`, `f = ⟨X, H(X)⟩`, `𝒳 = [0,1]^{n×n}`,
/// `τ = 1`, `γ = 2`, `L = 2‖H‖`.
pub struct QapRelaxProblem {
    pub qap: QapProblem,
    kernel: Kernel,
    smoothness: SmoothnessDescriptor,
}

impl QapRelaxProblem {
    pub fn new(qap: QapProblem) -> Self {
        let smoothness = SmoothnessDescriptor::new(qap.l, 1.0, 2.0, BoxSet::unit())
            .expect("constants are valid by construction");
        Self {
            qap,
            kernel: Kernel::entropy(),
            smoothness,
        }
    }

    pub fn n(&self) -> usize {
        self.qap.instance.n
    }

    /// Starting interior point of the experiment protocol: the all-ones matrix.
    pub fn all_ones_start(&self) -> Point {
        Point::constant(self.n(), self.n(), 1.0)
    }

    fn marginal_error(x: &DMatrix<f64>) -> f64 {
        let n = x.nrows();
        let mut err = 0.0_f64;
        for i in 0..n {
            err = err.max((x.row(i).sum() - 1.0).abs());
        }
        for j in 0..n {
            err = err.max((x.column(j).sum() - 1.0).abs());
        }
        err
    }
}

impl crate::solver::Problem for QapRelaxProblem {
    fn f_eval(&self, x: &Point) -> f64 {
        quadratic_form(&self.qap, x.as_matrix())
    }

    fn f_grad(&self, x: &Point) -> Point {
        let (_, grad) = objective_and_gradient(&self.qap, x.as_matrix()).expect("square point");
        Point::from(grad)
    }

    fn p_eval(&self, x: &Point) -> f64 {
        if Self::marginal_error(x.as_matrix()) <= crate::solver::FEASIBILITY_TOL {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn feasible_objective(&self, x: &Point) -> f64 {
        self.f_eval(x)
    }

    fn feasibility_error(&self, x: &Point) -> f64 {
        let neg = x
            .as_matrix()
            .iter()
            .fold(0.0_f64, |acc, &v| acc.max(-v));
        Self::marginal_error(x.as_matrix()).max(neg)
    }

    fn to_feasible(&self, x: &Point) -> Point {
        let floored = x.as_matrix().map(|v| v.max(crate::transport::ANCHOR_FLOOR));
        Point::from(round_to_polytope(&floored).expect("entries floored to positive"))
    }

    fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    fn smoothness(&self) -> &SmoothnessDescriptor {
        &self.smoothness
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Problem;

    #[test]
    fn parse_minimal_instance() {
        let inst = parse_qaplib("2  0 1 1 0  0 2 2 0", "tiny").unwrap();
        assert_eq!(inst.n, 2);
        assert_eq!(inst.a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(inst.b, DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]));
    }

    #[test]
    fn parse_skips_comments_and_blanks() {
        let text = "# comment\n\n2\n\n0 1\n1 0\n\n# distances\n0 2\n2 0\n";
        let inst = parse_qaplib(text, "t").unwrap();
        assert_eq!(inst.n, 2);
    }

    #[test]
    fn parse_rejects_bad_inputs() {
        assert!(parse_qaplib("1  5  5", "t").is_err());
        assert!(parse_qaplib("2  0 1 1 0  0 2 2", "t").is_err());
        assert!(parse_qaplib("2  0 1 x 0  0 2 2 0", "t").is_err());
    }

    #[test]
    fn parse_symmetrizes() {
        let inst = parse_qaplib("2  0 2 0 0  0 0 0 0", "t").unwrap();
        assert_eq!(inst.a[(0, 1)], 1.0);
        assert_eq!(inst.a[(1, 0)], 1.0);
    }

    #[test]
    fn zero_instance_collapses() {
        let inst = parse_qaplib("2  0 0 0 0  0 0 0 0", "zero").unwrap();
        let p = build_relaxation(inst, StMode::LapDuals).unwrap();
        assert_eq!(p.l, 0.0);
        assert_eq!(p.norm_h, 0.0);
        assert!(p.s.norm() < 1e-12 && p.t.norm() < 1e-12);
    }

    #[test]
    fn identity_instance_dual_sum() {
        let n = 4;
        let mut tokens = vec![n.to_string()];
        for m in 0..2 {
            let _ = m;
            for i in 0..n {
                for j in 0..n {
                    tokens.push(if i == j { "1".into() } else { "0".into() });
                }
            }
        }
        let inst = parse_qaplib(&tokens.join(" "), "eye").unwrap();
        let p = build_relaxation(inst, StMode::LapDuals).unwrap();
        let dual_sum: f64 = p.s_dual.sum() + p.t_dual.sum();
        assert!((dual_sum - n as f64).abs() < 1e-9, "dual sum {dual_sum}");
        assert!(p.psd_margin.abs() < 1e-9, "margin {}", p.psd_margin);
    }

    #[test]
    fn h_is_self_adjoint() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 5;
        let raw: Vec<f64> = (0..2 * n * n).map(|_| rng.gen_range(0.0..9.0)).collect();
        let text = format!(
            "{n} {}",
            raw.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(" ")
        );
        let p = build_relaxation(parse_qaplib(&text, "rand").unwrap(), StMode::LapDuals).unwrap();
        for _ in 0..20 {
            let x = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let y = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let lhs = apply_h(&p, &x).unwrap().dot(&y);
            let rhs = apply_h(&p, &y).unwrap().dot(&x);
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!((lhs - rhs).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn apply_h_basics() {
        let p = build_relaxation(
            parse_qaplib("2  0 1 1 0  0 2 2 0", "tiny").unwrap(),
            StMode::LapDuals,
        )
        .unwrap();
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(apply_h(&p, &zero).unwrap(), zero);
        let (f0, g0) = objective_and_gradient(&p, &zero).unwrap();
        assert_eq!(f0, 0.0);
        assert_eq!(g0, zero);
        assert!(apply_h(&p, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn power_iteration_matches_spectral_formula() {
        // The operator's eigenvalues are exactly λ_i ω_j − s_i − t_j.
        let p = build_relaxation(
            parse_qaplib("3  0 2 1 2 0 3 1 3 0  0 1 2 1 0 1 2 1 0", "t3").unwrap(),
            StMode::LapDuals,
        )
        .unwrap();
        let mut exact: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                exact = exact.max(p.lambda[i] * p.omega[j] - p.s_dual[i] - p.t_dual[j]);
            }
        }
        assert!(
            (p.norm_h - exact).abs() <= 1e-6 * exact.max(1.0),
            "power {} vs exact {exact}",
            p.norm_h
        );
    }

    #[test]
    fn power_iteration_self_consistency() {
        let p = build_relaxation(
            parse_qaplib("3  0 2 1 2 0 3 1 3 0  0 1 2 1 0 1 2 1 0", "t3").unwrap(),
            StMode::LapDuals,
        )
        .unwrap();
        let tighter = power_iteration_norm(&p, 1e-9, 50_000);
        assert!((p.norm_h - tighter).abs() <= 0.01 * tighter.max(1e-12));
    }

    #[test]
    fn nfval_examples() {
        let p = build_relaxation(
            parse_qaplib("2  0 1 1 0  0 1 1 0", "t2").unwrap(),
            StMode::LapDuals,
        )
        .unwrap();
        let uniform = DMatrix::from_element(2, 2, 0.5);
        let (f_uniform, _) = objective_and_gradient(&p, &uniform).unwrap();
        // At the evaluation point itself the gap vanishes.
        let gap = nfval(&p, &uniform, f_uniform).unwrap();
        if f_uniform != 0.0 {
            assert!(gap < 1e-12);
        }
        // Doubling the reference value gives exactly 1 when f* != 0.
        if f_uniform != 0.0 {
            let one = nfval(&p, &uniform, f_uniform / 2.0).unwrap();
            assert!((one - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn relax_problem_feasibility_error() {
        let p = QapRelaxProblem::new(
            build_relaxation(
                parse_qaplib("2  0 1 1 0  0 1 1 0", "t2").unwrap(),
                StMode::LapDuals,
            )
            .unwrap(),
        );
        let feasible = Point::constant(2, 2, 0.5);
        assert!(p.feasibility_error(&feasible) < 1e-15);
        assert_eq!(p.p_eval(&feasible), 0.0);
        let infeasible = Point::constant(2, 2, 0.6);
        assert!(p.feasibility_error(&infeasible) > 0.1);
        assert!(p.p_eval(&infeasible).is_infinite());
    }
}
