//! Bregman kernels, the induced distance, and the smoothness checks the
//! solvers build on.
//!
//! Two kernels are shipped: the quadratic kernel `½‖·‖²` (which recovers the
//! Euclidean proximal setting) and the entropy kernel `Σ x(log x − 1)` on the
//! nonnegative orthant. The entropy distance is evaluated through the explicit
//! relative-entropy formula rather than the generic three-term expansion,
//! which loses precision when the two points are close; the generic path is
//! retained for cross-checking.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative floor below which a negative distance is treated as round-off and
/// clamped to zero. Anything more negative is reported as an error.
pub const NEGATIVE_CLAMP_REL: f64 = 1e-12;

/// A problem-shaped dense point (matrix or column vector) with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    data: DMatrix<f64>,
}

impl Point {
    /// Wraps a matrix, rejecting NaN/Inf entries.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        for j in 0..data.ncols() {
            for i in 0..data.nrows() {
                if !data[(i, j)].is_finite() {
                    return Err(Error::NonFiniteEntry { row: i, col: j });
                }
            }
        }
        Ok(Self { data })
    }

    /// Column vector from a slice.
    pub fn vector(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    /// Constant matrix.
    pub fn constant(nrows: usize, ncols: usize, value: f64) -> Self {
        Self {
            data: DMatrix::from_element(nrows, ncols, value),
        }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.data.nrows(), self.data.ncols())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.len() == 0
    }

    /// Euclidean (Frobenius) norm.
    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    /// `(1 − theta) * self + theta * other`.
    pub fn interpolate(&self, other: &Point, theta: f64) -> Point {
        Point {
            data: &self.data * (1.0 - theta) + &other.data * theta,
        }
    }

    pub fn sub(&self, other: &Point) -> Point {
        Point {
            data: &self.data - &other.data,
        }
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.data.dot(&other.data)
    }

    pub(crate) fn same_shape(&self, other: &Point) -> bool {
        self.shape() == other.shape()
    }
}

impl From<DMatrix<f64>> for Point {
    /// Infallible wrap for matrices produced internally; still validates in
    /// debug builds.
    fn from(data: DMatrix<f64>) -> Self {
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { data }
    }
}

/// A Legendre-type kernel generating the Bregman distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// `φ(x) = ½‖x‖²`; domain and interior are the whole space.
    Quadratic,
    /// `φ(x) = Σ xᵢ(log xᵢ − 1)` with the convention `0·log 0 = 0`;
    /// domain is the nonnegative orthant. Interior membership requires
    /// entries at or above `interior_floor` so that logs stay finite.
    Entropy { interior_floor: f64 },
}

impl Kernel {
    pub fn entropy() -> Self {
        Kernel::Entropy {
            interior_floor: 1e-300,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Quadratic => "quadratic",
            Kernel::Entropy { .. } => "entropy",
        }
    }

    /// Kernel value; `+∞` outside the domain.
    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            Kernel::Quadratic => 0.5 * x.norm().powi(2),
            Kernel::Entropy { .. } => {
                let mut acc = 0.0;
                for &v in x.as_matrix().iter() {
                    if v < 0.0 {
                        return f64::INFINITY;
                    }
                    if v > 0.0 {
                        acc += v * (v.ln() - 1.0);
                    }
                }
                acc
            }
        }
    }

    /// Kernel gradient, defined on the interior of the domain.
    pub fn grad(&self, x: &Point) -> Result<Point> {
        if !self.is_interior(x) {
            return Err(Error::NotInterior { role: "gradient point" });
        }
        Ok(match self {
            Kernel::Quadratic => x.clone(),
            Kernel::Entropy { .. } => Point::from(x.as_matrix().map(|v| v.ln())),
        })
    }

    pub fn is_in_domain(&self, x: &Point) -> bool {
        match self {
            Kernel::Quadratic => true,
            Kernel::Entropy { .. } => x.as_matrix().iter().all(|&v| v >= 0.0),
        }
    }

    pub fn is_interior(&self, x: &Point) -> bool {
        match self {
            Kernel::Quadratic => true,
            Kernel::Entropy { interior_floor } => {
                x.as_matrix().iter().all(|&v| v >= *interior_floor)
            }
        }
    }

    /// `D_φ(x, y)` through the kernel-specific formula, clamped against
    /// negative round-off. See [`bregman_distance`] for the checked entry
    /// point with domain validation.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        match self {
            Kernel::Quadratic => Ok(0.5 * x.sub(y).norm().powi(2)),
            Kernel::Entropy { .. } => {
                let mut acc = 0.0;
                let mut scale = 1.0;
                for (&xv, &yv) in x.as_matrix().iter().zip(y.as_matrix().iter()) {
                    let term = if xv == 0.0 {
                        yv
                    } else {
                        // x·log(x/y) − x + y, written against cancellation
                        // when x ≈ y.
                        let log_ratio = ((xv - yv) / yv).ln_1p();
                        xv * log_ratio - xv + yv
                    };
                    acc += term;
                    scale += xv.abs() + yv.abs();
                }
                clamp_distance(acc, scale)
            }
        }
    }

    /// `φ(x) − φ(y) − ⟨∇φ(y), x − y⟩`: the generic expansion, kept as a
    /// cross-check of the specialized formula.
    pub fn distance_generic(&self, x: &Point, y: &Point) -> Result<f64> {
        let grad_y = self.grad(y)?;
        let value = self.eval(x) - self.eval(y) - grad_y.dot(&x.sub(y));
        let scale = 1.0 + self.eval(x).abs() + self.eval(y).abs() + grad_y.norm() * x.sub(y).norm();
        clamp_distance(value, scale)
    }
}

fn clamp_distance(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -NEGATIVE_CLAMP_REL * scale {
        Ok(0.0)
    } else {
        Err(Error::NegativeDistance {
            value,
            floor: -NEGATIVE_CLAMP_REL * scale,
        })
    }
}

/// `D_φ(x, y)` with domain validation: `x` must lie in the kernel domain and
/// `y` in its interior.
pub fn bregman_distance(kernel: &Kernel, x: &Point, y: &Point) -> Result<f64> {
    if !x.same_shape(y) {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", x.shape()),
            got: format!("{:?}", y.shape()),
        });
    }
    if !kernel.is_in_domain(x) {
        return Err(Error::NotInDomain { role: "x" });
    }
    if !kernel.is_interior(y) {
        return Err(Error::NotInterior { role: "y" });
    }
    kernel.distance(x, y)
}

/// Four-points identity gap:
/// `⟨∇φ(a) − ∇φ(b), c − d⟩ − [D(c,b) + D(d,a) − D(c,a) − D(d,b)]`.
///
/// Zero up to round-off for every valid quadruple; this exists as a test
/// oracle for the distance implementations.
pub fn four_points_gap(kernel: &Kernel, a: &Point, b: &Point, c: &Point, d: &Point) -> Result<f64> {
    let grad_diff = kernel.grad(a)?.sub(&kernel.grad(b)?);
    let inner = grad_diff.dot(&c.sub(d));
    let rhs = bregman_distance(kernel, c, b)? + bregman_distance(kernel, d, a)?
        - bregman_distance(kernel, c, a)?
        - bregman_distance(kernel, d, b)?;
    Ok(inner - rhs)
}

/// Magnitude reference for relative tolerances on the four-points identity.
pub fn four_points_scale(kernel: &Kernel, a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    let mut scale = 1.0;
    if let (Ok(db), Ok(da)) = (bregman_distance(kernel, c, b), bregman_distance(kernel, d, a)) {
        scale += db + da;
    }
    if let (Ok(dca), Ok(ddb)) = (bregman_distance(kernel, c, a), bregman_distance(kernel, d, b)) {
        scale += dca + ddb;
    }
    scale
}

/// Axis-aligned box used as the restriction set 𝒳. The solvers never project
/// onto it; they only validate membership.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: f64,
    pub upper: f64,
}

impl BoxSet {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn unit() -> Self {
        Self { lower: 0.0, upper: 1.0 }
    }

    pub fn all() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        x.as_matrix()
            .iter()
            .all(|&v| v >= self.lower - tol && v <= self.upper + tol)
    }
}

/// Relative-smoothness data: `f` is `l`-smooth relative to the kernel on the
/// box, with restricted exponent `gamma` and constant `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessDescriptor {
    pub l: f64,
    pub tau: f64,
    pub gamma: f64,
    pub restriction: BoxSet,
}

impl SmoothnessDescriptor {
    pub fn new(l: f64, tau: f64, gamma: f64, restriction: BoxSet) -> Result<Self> {
        if !(gamma >= 1.0) {
            return Err(Error::Config(format!("gamma must be >= 1, got {gamma}")));
        }
        if !(tau > 0.0) {
            return Err(Error::Config(format!("tau must be > 0, got {tau}")));
        }
        if !(l >= 0.0) {
            return Err(Error::Config(format!("L must be >= 0, got {l}")));
        }
        Ok(Self { l, tau, gamma, restriction })
    }
}

/// Result of a sampled inequality check: the largest violation observed and
/// where it occurred. A nonpositive `max_violation` means every sample was
/// consistent with the inequality.
#[derive(Clone, Copy, Debug)]
pub struct SampleReport {
    pub max_violation: f64,
    pub worst_sample: usize,
    pub samples: usize,
}

/// Checks `f(y) ≤ f(x) + ⟨∇f(x), y − x⟩ + L·D_φ(y, x)` over sample pairs
/// `(x, y)` with `x` interior. Reports, never fails on violation.
pub fn check_relative_smoothness<F, G>(
    f_eval: F,
    f_grad: G,
    kernel: &Kernel,
    desc: &SmoothnessDescriptor,
    pairs: &[(Point, Point)],
) -> Result<SampleReport>
where
    F: Fn(&Point) -> f64,
    G: Fn(&Point) -> Point,
{
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = 0;
    for (idx, (x, y)) in pairs.iter().enumerate() {
        let gap = f_eval(y)
            - f_eval(x)
            - f_grad(x).dot(&y.sub(x))
            - desc.l * bregman_distance(kernel, y, x)?;
        if gap > max_violation {
            max_violation = gap;
            worst = idx;
        }
    }
    Ok(SampleReport {
        max_violation,
        worst_sample: worst,
        samples: pairs.len(),
    })
}

/// Checks the restricted-exponent inequality
/// `D_f((1−θ)x + θz̃, (1−θ)x + θz) ≤ τ·L·θ^γ·D_φ(z̃, z)`
/// over samples `(x, z̃, z, θ)` with `z` interior and `θ ∈ (0, 1]`.
pub fn check_restricted_exponent<F, G>(
    f_eval: F,
    f_grad: G,
    kernel: &Kernel,
    desc: &SmoothnessDescriptor,
    samples: &[(Point, Point, Point, f64)],
) -> Result<SampleReport>
where
    F: Fn(&Point) -> f64,
    G: Fn(&Point) -> Point,
{
    let mut max_violation = f64::NEG_INFINITY;
    let mut worst = 0;
    for (idx, (x, z_tilde, z, theta)) in samples.iter().enumerate() {
        let u = x.interpolate(z_tilde, *theta);
        let v = x.interpolate(z, *theta);
        // D_f(u, v) = f(u) − f(v) − ⟨∇f(v), u − v⟩
        let df = f_eval(&u) - f_eval(&v) - f_grad(&v).dot(&u.sub(&v));
        let rhs = desc.tau * desc.l * theta.powf(desc.gamma) * bregman_distance(kernel, z_tilde, z)?;
        let gap = df - rhs;
        if gap > max_violation {
            max_violation = gap;
            worst = idx;
        }
    }
    Ok(SampleReport {
        max_violation,
        worst_sample: worst,
        samples: samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(values: &[f64]) -> Point {
        Point::vector(values).unwrap()
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(Point::vector(&[1.0, f64::NAN]).is_err());
        assert!(Point::vector(&[1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn quadratic_distance_is_half_squared_norm() {
        let k = Kernel::Quadratic;
        let d = bregman_distance(&k, &pt(&[1.0, 0.0]), &pt(&[0.0, 0.0])).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_case_is_zero() {
        let k = Kernel::entropy();
        let x = pt(&[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(bregman_distance(&k, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn entropy_hand_value() {
        // x = (1, 1), y = (e, 1):
        // Σ x log(x/y) − x + y = 1·log(1/e) − 1 + e + 0 = e − 2.
        let k = Kernel::entropy();
        let x = pt(&[1.0, 1.0]);
        let y = pt(&[std::f64::consts::E, 1.0]);
        let expected = std::f64::consts::E - 2.0;
        let d = bregman_distance(&k, &x, &y).unwrap();
        assert!((d - expected).abs() < 1e-14, "d = {d}");
        // Cross-check against the generic three-term expansion.
        let d_generic = k.distance_generic(&x, &y).unwrap();
        assert!((d - d_generic).abs() < 1e-12);
    }

    #[test]
    fn entropy_zero_entry_convention() {
        let k = Kernel::entropy();
        // x has a zero entry: the x log x term drops, leaving +y.
        let d = bregman_distance(&k, &pt(&[0.0, 1.0]), &pt(&[0.5, 1.0])).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn entropy_domain_errors_are_distinct() {
        let k = Kernel::entropy();
        let inside = pt(&[0.5, 0.5]);
        let negative = pt(&[-0.1, 0.5]);
        let boundary = pt(&[0.0, 0.5]);
        match bregman_distance(&k, &negative, &inside) {
            Err(Error::NotInDomain { role }) => assert_eq!(role, "x"),
            other => panic!("expected domain error, got {other:?}"),
        }
        match bregman_distance(&k, &inside, &boundary) {
            Err(Error::NotInterior { role }) => assert_eq!(role, "y"),
            other => panic!("expected interior error, got {other:?}"),
        }
    }

    #[test]
    fn four_points_quadratic_is_algebraic_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = Kernel::Quadratic;
        for _ in 0..50 {
            let rand_pt = |rng: &mut ChaCha8Rng| {
                pt(&[rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)])
            };
            let (a, b, c, d) = (rand_pt(&mut rng), rand_pt(&mut rng), rand_pt(&mut rng), rand_pt(&mut rng));
            let gap = four_points_gap(&k, &a, &b, &c, &d).unwrap();
            assert!(gap.abs() <= 1e-12, "gap = {gap}");
        }
    }

    #[test]
    fn four_points_coincident_endpoints() {
        let k = Kernel::entropy();
        let a = pt(&[0.5, 1.5]);
        let c = pt(&[0.2, 0.7]);
        let d = pt(&[1.0, 2.0]);
        let gap = four_points_gap(&k, &a, &a, &c, &d).unwrap();
        assert!(gap.abs() <= 1e-12, "gap = {gap}");
    }

    #[test]
    fn four_points_entropy_random_quadruples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = Kernel::entropy();
        for _ in 0..100 {
            let rand_pt = |rng: &mut ChaCha8Rng| {
                pt(&[
                    rng.gen_range(0.1..10.0),
                    rng.gen_range(0.1..10.0),
                    rng.gen_range(0.1..10.0),
                ])
            };
            let (a, b, c, d) = (rand_pt(&mut rng), rand_pt(&mut rng), rand_pt(&mut rng), rand_pt(&mut rng));
            let gap = four_points_gap(&k, &a, &b, &c, &d).unwrap();
            let scale = four_points_scale(&k, &a, &b, &c, &d);
            assert!(gap.abs() <= 1e-10 * scale, "gap = {gap}, scale = {scale}");
        }
    }

    #[test]
    fn entropy_strong_convexity_on_unit_box() {
        // D_φ(x, y) ≥ ½‖x − y‖² for entries in (0, 1].
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let k = Kernel::entropy();
        for _ in 0..500 {
            let x = pt(&[rng.gen_range(1e-3..1.0), rng.gen_range(1e-3..1.0)]);
            let y = pt(&[rng.gen_range(1e-3..1.0), rng.gen_range(1e-3..1.0)]);
            let d = bregman_distance(&k, &x, &y).unwrap();
            let half_sq = 0.5 * x.sub(&y).norm().powi(2);
            assert!(d >= half_sq - 1e-12, "d = {d}, ½‖x−y‖² = {half_sq}");
        }
    }

    #[test]
    fn entropy_gradient_diverges_toward_boundary() {
        // Essential smoothness: ‖∇φ‖ grows monotonically along a sequence
        // shrinking to the boundary.
        let k = Kernel::entropy();
        let mut last = 0.0;
        for exp in 1..12 {
            let t = 10f64.powi(-exp);
            let g = k.grad(&pt(&[t, 1.0])).unwrap().norm();
            assert!(g > last, "gradient norm must grow: {g} after {last}");
            last = g;
        }
    }

    #[test]
    fn level_set_behavior_b3_b4() {
        // B3: xᵏ → x* interior-to-domain implies D(x*, xᵏ) → 0.
        let k = Kernel::entropy();
        let target = pt(&[0.0, 1.0]); // boundary point of the domain
        let mut prev = f64::INFINITY;
        for i in 1..14 {
            let t = 2f64.powi(-i);
            let xk = pt(&[t, 1.0 + t]);
            let d = bregman_distance(&k, &target, &xk).unwrap();
            assert!(d <= prev + 1e-14);
            prev = d;
        }
        assert!(prev < 1e-3, "D(x*, xᵏ) should vanish, got {prev}");

        // B4: D(xᵏ, yᵏ) → 0 with yᵏ → y* forces xᵏ → y*.
        let y_star = pt(&[0.3, 0.7]);
        for i in 1..14 {
            let t = 2f64.powi(-i);
            let yk = pt(&[0.3 + t, 0.7 - t]);
            // Construct xᵏ with prescribed tiny divergence.
            let xk = pt(&[0.3 + t + t * t, 0.7 - t + t * t]);
            let d = bregman_distance(&k, &xk, &yk).unwrap();
            if d < 1e-10 {
                assert!(xk.sub(&y_star).norm() < 1e-3);
            }
        }
    }

    #[test]
    fn separation_of_points() {
        // D_φ(x, y) = 0 ⟹ ‖x − y‖ ≤ 1e-8 on bounded entries; tested on the
        // contrapositive over random pairs.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for kernel in [Kernel::Quadratic, Kernel::entropy()] {
            for _ in 0..500 {
                let x = pt(&[rng.gen_range(1e-6..1e3), rng.gen_range(1e-6..1e3)]);
                let y = pt(&[rng.gen_range(1e-6..1e3), rng.gen_range(1e-6..1e3)]);
                let d = bregman_distance(&kernel, &x, &y).unwrap();
                if x.sub(&y).norm() > 1e-8 {
                    assert!(d > 0.0, "kernel {} separation failed", kernel.name());
                }
            }
        }
    }

    #[test]
    fn linear_objective_has_zero_violation_at_l_zero() {
        let k = Kernel::entropy();
        let desc = SmoothnessDescriptor::new(0.0, 1.0, 1.0, BoxSet::all()).unwrap();
        let cost = pt(&[1.0, -2.0, 0.5]);
        let f = |x: &Point| cost.dot(x);
        let g = |_: &Point| cost.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let pairs: Vec<_> = (0..100)
            .map(|_| {
                (
                    pt(&[rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)]),
                    pt(&[rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0)]),
                )
            })
            .collect();
        let report = check_relative_smoothness(f, g, &k, &desc, &pairs).unwrap();
        assert!(report.max_violation.abs() <= 1e-12, "violation {}", report.max_violation);
    }

    #[test]
    fn restricted_exponent_degenerate_samples() {
        let k = Kernel::entropy();
        let desc = SmoothnessDescriptor::new(2.0, 1.0, 2.0, BoxSet::unit()).unwrap();
        let f = |x: &Point| x.dot(x);
        let g = |x: &Point| Point::from(x.as_matrix() * 2.0);
        // z̃ = z makes both sides vanish.
        let x = pt(&[0.4, 0.6]);
        let z = pt(&[0.5, 0.5]);
        let report =
            check_restricted_exponent(f, g, &k, &desc, &[(x, z.clone(), z, 0.7)]).unwrap();
        assert!(report.max_violation.abs() <= 1e-14);
    }

    #[test]
    fn smoothness_descriptor_validation() {
        assert!(SmoothnessDescriptor::new(1.0, 1.0, 0.5, BoxSet::all()).is_err());
        assert!(SmoothnessDescriptor::new(1.0, 0.0, 1.0, BoxSet::all()).is_err());
        assert!(SmoothnessDescriptor::new(-1.0, 1.0, 1.0, BoxSet::all()).is_err());
    }
}
