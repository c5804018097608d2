//! Parameter schedules: the inertial θ-sequence with its validity conditions,
//! the per-iteration tolerance triples (η, μ, ν), and the running error sums
//! that the convergence-bound verifiers consume.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the θ-sequence is generated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ThetaMode {
    /// `θ_k = (α − 1)/(k + α − 1)` for `k ≥ 1`, `θ_0 = 1`. Requires `α ≥ γ + 1`.
    ClosedForm { alpha: f64 },
    /// Solve the equality form `(1 − θ_{k+1})/θ_{k+1}^γ = 1/θ_k^γ` by bisection.
    RootFind,
    /// `θ_k ≡ 1`: violates the decay condition for `k ≥ 1` and collapses the
    /// inertial method onto the plain one. Exists for tests only.
    DegenerateOnes,
}

/// The inertial parameter sequence `{θ_k}` with `θ_{-1} = θ_0 = 1`, cached up
/// to the largest index requested. Pre-materialize with [`ThetaSchedule::ensure`]
/// before sharing across threads.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaSchedule {
    pub mode: ThetaMode,
    pub gamma: f64,
    cache: Vec<f64>,
}

impl ThetaSchedule {
    pub fn closed_form(alpha: f64, gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0) {
            return Err(Error::Config(format!("gamma must be >= 1, got {gamma}")));
        }
        if !(alpha >= gamma + 1.0) {
            return Err(Error::Config(format!(
                "alpha must be >= gamma + 1 = {}, got {alpha}",
                gamma + 1.0
            )));
        }
        Ok(Self {
            mode: ThetaMode::ClosedForm { alpha },
            gamma,
            cache: vec![1.0],
        })
    }

    pub fn root_find(gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0) {
            return Err(Error::Config(format!("gamma must be >= 1, got {gamma}")));
        }
        Ok(Self {
            mode: ThetaMode::RootFind,
            gamma,
            cache: vec![1.0],
        })
    }

    /// Constant-one schedule for collapse tests; invalid as a production schedule.
    pub fn degenerate_ones(gamma: f64) -> Self {
        Self {
            mode: ThetaMode::DegenerateOnes,
            gamma,
            cache: vec![1.0],
        }
    }

    /// `θ_k` for `k ≥ -1` (`θ_{-1} = θ_0 = 1`).
    pub fn theta(&mut self, k: i64) -> f64 {
        if k <= 0 {
            return 1.0;
        }
        self.ensure(k as usize);
        self.cache[k as usize]
    }

    /// Materializes the cache through index `k_max`.
    pub fn ensure(&mut self, k_max: usize) {
        while self.cache.len() <= k_max {
            let k = self.cache.len();
            let next = match self.mode {
                ThetaMode::ClosedForm { alpha } => theta_closed_form(k, alpha, self.gamma)
                    .expect("validated at construction"),
                ThetaMode::RootFind => theta_root_find(self.cache[k - 1], self.gamma),
                ThetaMode::DegenerateOnes => 1.0,
            };
            self.cache.push(next);
        }
    }

    /// `ϑ_k = 1/θ_{k-1}^γ − (1 − θ_k)/θ_k^γ`, nonnegative for a valid schedule.
    ///
    /// The two terms grow like `1/θ^γ`, so near the equality form the
    /// difference is resolvable only to `ε·θ^{-γ}`; the negativity guard is
    /// therefore scaled by that magnitude.
    pub fn vartheta(&mut self, k: usize) -> Result<f64> {
        let prev = self.theta(k as i64 - 1);
        let cur = self.theta(k as i64);
        let value = prev.powf(-self.gamma) - (1.0 - cur) * cur.powf(-self.gamma);
        let scale = prev.powf(-self.gamma).max(cur.powf(-self.gamma)).max(1.0);
        if value < -1e-12 * scale {
            return Err(Error::ScheduleInvalid {
                k,
                reason: format!("vartheta = {value:.6e} < 0"),
            });
        }
        Ok(value)
    }
}

/// `θ_k = (α − 1)/(k + α − 1)` for `k ≥ 1`; returns 1 at `k = 0`.
pub fn theta_closed_form(k: usize, alpha: f64, gamma: f64) -> Result<f64> {
    if !(alpha >= gamma + 1.0) || !(gamma >= 1.0) {
        return Err(Error::Config(format!(
            "closed-form theta requires alpha >= gamma + 1 >= 2, got alpha = {alpha}, gamma = {gamma}"
        )));
    }
    if k == 0 {
        Ok(1.0)
    } else {
        Ok((alpha - 1.0) / (k as f64 + alpha - 1.0))
    }
}

/// Solves `(1 − θ)/θ^γ = 1/θ_prev^γ` for `θ ∈ (0, θ_prev]` by bisection on the
/// rearranged monotone form `g(θ) = θ^γ + θ_prev^γ·θ − θ_prev^γ`, which keeps
/// every term order-`θ_prev^γ` and so avoids the ill-conditioning of the
/// quotient form at small θ. The returned endpoint satisfies `g(θ) ≥ 0`, which
/// is exactly `ϑ ≥ 0` for the step it will be used in.
pub fn theta_root_find(theta_prev: f64, gamma: f64) -> f64 {
    assert!(theta_prev > 0.0 && theta_prev <= 1.0, "theta_prev in (0, 1]");
    let pg = theta_prev.powf(gamma);
    let g = |t: f64| t.powf(gamma) + pg * t - pg;
    let mut lo = 0.0_f64;
    let mut hi = theta_prev;
    debug_assert!(g(hi) >= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Outcome of a θ-schedule validation sweep.
#[derive(Clone, Debug)]
pub struct ThetaValidation {
    pub checked_up_to: usize,
    pub first_violation: Option<(usize, String)>,
}

impl ThetaValidation {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks, for all `k ≤ k_max`: `θ_k ∈ (0, 1]`, the decay bound
/// `θ_k ≤ (α − 1)/(k + α − 1)` (with `α = γ + 1` in root-find mode),
/// `ϑ_k ≥ 0` up to conditioning, the lower bound `θ_k ≥ 1/(k + γ)`, and the
/// running bound `Σ ϑ_i ≤ 2 + (k + 1 + γ)^γ / γ`. Returns the first violation.
pub fn validate_theta(schedule: &mut ThetaSchedule, k_max: usize) -> ThetaValidation {
    let gamma = schedule.gamma;
    let alpha = match schedule.mode {
        ThetaMode::ClosedForm { alpha } => alpha,
        _ => gamma + 1.0,
    };
    schedule.ensure(k_max);
    let mut vartheta_sum = 0.0;
    for k in 0..=k_max {
        let theta = schedule.theta(k as i64);
        if !(theta > 0.0 && theta <= 1.0) {
            return violation(k_max, k, format!("theta = {theta} outside (0, 1]"));
        }
        if k >= 1 {
            let cap = (alpha - 1.0) / (k as f64 + alpha - 1.0);
            if theta > cap * (1.0 + 1e-12) {
                return violation(k_max, k, format!("theta = {theta} exceeds decay cap {cap}"));
            }
        }
        let vt = match schedule.vartheta(k) {
            Ok(v) => v,
            Err(e) => return violation(k_max, k, e.to_string()),
        };
        vartheta_sum += vt.max(0.0);
        let lower = 1.0 / (k as f64 + gamma);
        if theta < lower - 1e-14 {
            return violation(k_max, k, format!("theta = {theta} below lower bound {lower}"));
        }
        let sum_cap = 2.0 + (k as f64 + 1.0 + gamma).powf(gamma) / gamma;
        if vartheta_sum > sum_cap * (1.0 + 1e-9) {
            return violation(
                k_max,
                k,
                format!("sum of vartheta = {vartheta_sum} exceeds cap {sum_cap}"),
            );
        }
    }
    ThetaValidation {
        checked_up_to: k_max,
        first_violation: None,
    }
}

fn violation(checked: usize, k: usize, reason: String) -> ThetaValidation {
    ThetaValidation {
        checked_up_to: checked,
        first_violation: Some((k, reason)),
    }
}

/// Analytic decay of one tolerance sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DecayForm {
    Zero,
    Constant { value: f64 },
    /// `max(1/(k+1)^p, floor)`.
    Power { p: f64, floor: f64 },
    /// `scale · ratio^k` with `0 < ratio < 1`.
    Geometric { scale: f64, ratio: f64 },
}

impl DecayForm {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            DecayForm::Zero => 0.0,
            DecayForm::Constant { value } => value,
            DecayForm::Power { p, floor } => (1.0 / (k as f64 + 1.0).powf(p)).max(floor),
            DecayForm::Geometric { scale, ratio } => scale * ratio.powi(k as i32),
        }
    }

    fn summable(&self) -> bool {
        match *self {
            DecayForm::Zero => true,
            DecayForm::Constant { value } => value == 0.0,
            DecayForm::Power { p, .. } => p > 1.0,
            DecayForm::Geometric { scale, ratio } => scale == 0.0 || ratio.abs() < 1.0,
        }
    }

    /// Is `Σ k^w · a_k` finite?
    fn weighted_summable(&self, w: f64) -> bool {
        match *self {
            DecayForm::Zero => true,
            DecayForm::Constant { value } => value == 0.0,
            DecayForm::Power { p, .. } => p > 1.0 + w,
            DecayForm::Geometric { scale, ratio } => scale == 0.0 || ratio.abs() < 1.0,
        }
    }
}

/// How η is rescaled before being handed to the oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Normalization {
    None,
    /// Iterates are known bounded (compact feasible set); norm factors fold
    /// into constants and the raw sequences are used as-is.
    BoundedDomain,
    /// `η_k = base_k / (‖x̃^{k+1}‖ + 1)`: requires the iterate norm.
    IterateNormalized,
}

/// The tolerance triples `(η_k, μ_k, ν_k)` for both solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSchedule {
    pub eta: DecayForm,
    pub mu: DecayForm,
    pub nu: DecayForm,
    pub normalization: Normalization,
}

impl ToleranceSchedule {
    /// The transport-oracle experiment setting: `η ≡ 0`, `ν ≡ 0`,
    /// `μ_k = max(1/(k+1)^p, 1e-10)`.
    pub fn power_mu(p: f64) -> Self {
        Self {
            eta: DecayForm::Zero,
            mu: DecayForm::Power { p, floor: 1e-10 },
            nu: DecayForm::Zero,
            normalization: Normalization::BoundedDomain,
        }
    }

    /// The triple for iteration `k`. `iterate_norm` is required (and only
    /// used) in `IterateNormalized` mode.
    pub fn tolerance_at(&self, k: usize, iterate_norm: Option<f64>) -> Result<(f64, f64, f64)> {
        let eta = match self.normalization {
            Normalization::IterateNormalized => {
                let norm = iterate_norm.ok_or_else(|| {
                    Error::Config("iterate norm required for iterate-normalized schedules".into())
                })?;
                self.eta.at(k) / (norm + 1.0)
            }
            _ => self.eta.at(k),
        };
        Ok((eta, self.mu.at(k), self.nu.at(k)))
    }
}

/// Which summability hypotheses a schedule meets, assuming bounded iterates
/// (valid here because the shipped feasible sets are compact). The `Power`
/// floor is a numerical guard and is ignored for classification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummabilityReport {
    /// `Σ η_k(‖x̃^{k+1}‖+1) < ∞`, `Σ μ_k < ∞`, `Σ ν_k < ∞`: averaged-iterate rate.
    pub avg_rate: bool,
    /// `Σ k·η_k(…) < ∞`, `Σ k·μ_k < ∞`, `Σ k·ν_k < ∞`: last-iterate rate.
    pub last_iterate_rate: bool,
    /// `Σ θ_k^{1−γ} η_k(…) < ∞`, `Σ μ_k < ∞`, `Σ θ_k^{1−γ} ν_k < ∞` with
    /// `θ_k = Θ(1/k)`: inertial rate.
    pub vibpg_rate: bool,
}

impl SummabilityReport {
    pub fn insufficient(&self) -> bool {
        !self.avg_rate && !self.last_iterate_rate && !self.vibpg_rate
    }
}

/// Classifies an analytic schedule against the rate hypotheses; `gamma` is
/// the restricted exponent used by the inertial solver.
pub fn summability_class(schedule: &ToleranceSchedule, gamma: f64) -> SummabilityReport {
    let avg = schedule.eta.summable() && schedule.mu.summable() && schedule.nu.summable();
    let last = schedule.eta.weighted_summable(1.0)
        && schedule.mu.weighted_summable(1.0)
        && schedule.nu.weighted_summable(1.0);
    // θ_k^{1−γ} grows like k^{γ−1}.
    let vibpg = schedule.eta.weighted_summable(gamma - 1.0)
        && schedule.mu.summable()
        && schedule.nu.weighted_summable(gamma - 1.0);
    SummabilityReport {
        avg_rate: avg,
        last_iterate_rate: last,
        vibpg_rate: vibpg,
    }
}

/// Running error sums over the measured certificate values, as used by the
/// convergence-bound verifiers. All recorded quantities are nonnegative, so
/// every sum is nondecreasing in `k`.
#[derive(Clone, Debug, Default)]
pub struct ErrorAccumulator {
    /// Σ η_i (‖x̃^{i+1}‖ + 1)
    pub sum_eta_weighted: f64,
    /// Σ η_i
    pub sum_eta: f64,
    /// Σ η_i ‖x̃^{i+1}‖
    pub sum_eta_norm: f64,
    /// Σ μ_i
    pub sum_mu: f64,
    /// Σ ν_i
    pub sum_nu: f64,
    /// Σ i·η_i (‖x̃^{i+1}‖ + ‖x̃^i‖ + 1)
    pub sum_k_eta_norms: f64,
    /// Σ i·μ_i
    pub sum_k_mu: f64,
    /// Σ i·ν_i
    pub sum_k_nu: f64,
    /// Σ i·ξ_i with ξ_i = η_i‖x̃^{i+1} − x̃^i‖ + L(μ_i + μ_{i−1}) + ν_i
    pub sum_k_xi: f64,
    /// Σ θ_i^{1−γ} η_i (‖z̃^{i+1}‖ + 1)
    pub sum_theta_eta_weighted: f64,
    /// Σ θ_i^{1−γ} η_i
    pub sum_theta_eta: f64,
    /// Σ θ_i^{1−γ} η_i ‖z̃^{i+1}‖
    pub sum_theta_eta_norm: f64,
    /// Σ θ_i^{1−γ} ν_i
    pub sum_theta_nu: f64,
    /// Σ ϑ_i
    pub sum_vartheta: f64,
    prev_mu: f64,
    prev_feasible_norm: f64,
    records: usize,
}

impl ErrorAccumulator {
    /// Accumulator for the non-inertial solver. `initial_mu` is the measured
    /// `D_φ(x̃⁰, x⁰)` (the μ of the companion starting pair) and
    /// `initial_norm` is `‖x̃⁰‖`; both feed the first ξ term.
    pub fn for_ibpg(initial_mu: f64, initial_norm: f64) -> Self {
        Self {
            prev_mu: initial_mu,
            prev_feasible_norm: initial_norm,
            ..Self::default()
        }
    }

    pub fn for_vibpg() -> Self {
        Self::default()
    }

    /// Records iteration `k` of the non-inertial solver with measured values.
    pub fn record_ibpg(
        &mut self,
        k: usize,
        l: f64,
        eta: f64,
        mu: f64,
        nu: f64,
        feasible_norm: f64,
        step_norm: f64,
    ) {
        let kf = k as f64;
        self.sum_eta_weighted += eta * (feasible_norm + 1.0);
        self.sum_eta += eta;
        self.sum_eta_norm += eta * feasible_norm;
        self.sum_mu += mu;
        self.sum_nu += nu;
        self.sum_k_eta_norms += kf * eta * (feasible_norm + self.prev_feasible_norm + 1.0);
        self.sum_k_mu += kf * mu;
        self.sum_k_nu += kf * nu;
        let xi = eta * step_norm + l * (mu + self.prev_mu) + nu;
        self.sum_k_xi += kf * xi;
        self.prev_mu = mu;
        self.prev_feasible_norm = feasible_norm;
        self.records += 1;
    }

    /// Records iteration `k` of the inertial solver with measured values.
    pub fn record_vibpg(
        &mut self,
        theta: f64,
        gamma: f64,
        vartheta: f64,
        eta: f64,
        mu: f64,
        nu: f64,
        feasible_norm: f64,
    ) {
        let w = theta.powf(1.0 - gamma);
        self.sum_theta_eta_weighted += w * eta * (feasible_norm + 1.0);
        self.sum_theta_eta += w * eta;
        self.sum_theta_eta_norm += w * eta * feasible_norm;
        self.sum_mu += mu;
        self.sum_nu += nu;
        self.sum_theta_nu += w * nu;
        self.sum_vartheta += vartheta;
        self.records += 1;
    }

    pub fn records(&self) -> usize {
        self.records
    }

    /// Averaged-iterate bound RHS after `k+1` records:
    /// `(L·D_φ(x, x⁰) + Σ(η_i‖x̃^{i+1}‖ + η_i‖x‖ + Lμ_i + ν_i)) / (k+1)`.
    pub fn ibpg_avg_rhs(&self, k: usize, l: f64, d0: f64, x_ref_norm: f64) -> f64 {
        (l * d0 + self.sum_eta_norm + self.sum_eta * x_ref_norm + l * self.sum_mu + self.sum_nu)
            / (k as f64 + 1.0)
    }

    /// Last-iterate bound RHS: the averaged RHS plus the `Σ i·ξ_i` term.
    pub fn ibpg_last_rhs(&self, k: usize, l: f64, d0: f64, x_ref_norm: f64) -> f64 {
        (l * d0
            + self.sum_eta_norm
            + self.sum_eta * x_ref_norm
            + l * self.sum_mu
            + self.sum_nu
            + self.sum_k_xi)
            / (k as f64 + 1.0)
    }

    /// Inertial bound RHS with prefactor already applied:
    /// `pref·(τL·D_φ(x, z⁰) + e(x)·Σϑ_i + Σ(θ_i^{1−γ}η_i‖z̃^{i+1}‖ + θ_i^{1−γ}η_i‖x‖ + τLμ_i + θ_i^{1−γ}ν_i))`.
    pub fn vibpg_rhs(
        &self,
        prefactor: f64,
        tau: f64,
        l: f64,
        d0: f64,
        x_ref_norm: f64,
        e_ref: f64,
    ) -> f64 {
        prefactor
            * (tau * l * d0
                + e_ref * self.sum_vartheta
                + self.sum_theta_eta_norm
                + self.sum_theta_eta * x_ref_norm
                + tau * l * self.sum_mu
                + self.sum_theta_nu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(theta_closed_form(0, 5.0, 2.0).unwrap(), 1.0);
        assert!((theta_closed_form(1, 5.0, 2.0).unwrap() - 0.8).abs() < 1e-15);
        assert!((theta_closed_form(10, 5.0, 2.0).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        assert!(theta_closed_form(1, 2.5, 2.0).is_err());
    }

    #[test]
    fn root_find_gamma_one_is_harmonic() {
        // (1 − θ)/θ = 1/θ_prev has the closed form θ = θ_prev/(1 + θ_prev),
        // so starting from 1 the sequence is 1/(k+1).
        let mut theta = 1.0;
        for k in 1..200 {
            theta = theta_root_find(theta, 1.0);
            let expected = 1.0 / (k as f64 + 1.0);
            assert!((theta - expected).abs() < 1e-12 * expected, "k = {k}");
        }
    }

    #[test]
    fn root_find_golden_section_step() {
        // (1 − θ)/θ² = 1 at θ_prev = 1 has root (√5 − 1)/2.
        let theta = theta_root_find(1.0, 2.0);
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((theta - golden).abs() < 1e-15);
        let residual = (1.0 - theta) / theta.powi(2) - 1.0;
        assert!(residual.abs() < 1e-14, "residual {residual}");
    }

    #[test]
    fn root_find_residual_small_k() {
        // The quotient-form residual is resolvable to 1e-12 while θ^γ stays
        // well above the f64 conditioning limit.
        let mut sched = ThetaSchedule::root_find(2.0).unwrap();
        sched.ensure(100);
        for k in 1..=100usize {
            let prev = sched.theta(k as i64 - 1);
            let cur = sched.theta(k as i64);
            let residual = (1.0 - cur) / cur.powi(2) - 1.0 / prev.powi(2);
            assert!(residual.abs() <= 1e-12, "k = {k}, residual = {residual}");
            // Normalized form holds to machine precision for all k.
            let normalized = (1.0 - cur) - (cur / prev).powi(2);
            assert!(normalized.abs() <= 1e-14, "k = {k}");
        }
    }

    #[test]
    fn root_find_lower_bound_long_run() {
        let mut sched = ThetaSchedule::root_find(2.0).unwrap();
        sched.ensure(100_000);
        for k in (0..=100_000).step_by(997) {
            let t = sched.theta(k as i64);
            assert!(t >= 1.0 / (k as f64 + 2.0) - 1e-14, "k = {k}, theta = {t}");
        }
    }

    #[test]
    fn vartheta_base_case_is_one() {
        let mut sched = ThetaSchedule::closed_form(5.0, 2.0).unwrap();
        assert!((sched.vartheta(0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vartheta_closed_form_explicit() {
        // For α = 5, γ = 2: ϑ_k = (2k + 9)/16 for k ≥ 2.
        let mut sched = ThetaSchedule::closed_form(5.0, 2.0).unwrap();
        for k in 2..50usize {
            let expected = (2.0 * k as f64 + 9.0) / 16.0;
            let got = sched.vartheta(k).unwrap();
            assert!((got - expected).abs() < 1e-10, "k = {k}: {got} vs {expected}");
        }
    }

    #[test]
    fn vartheta_root_find_is_zero_by_construction() {
        let mut sched = ThetaSchedule::root_find(2.0).unwrap();
        for k in 1..=100usize {
            let vt = sched.vartheta(k).unwrap();
            assert!(vt.abs() <= 1e-12, "k = {k}, vartheta = {vt}");
        }
    }

    #[test]
    fn validate_closed_form_and_root_find() {
        for gamma in [1.0, 2.0] {
            let mut cf = ThetaSchedule::closed_form(5.0, gamma).unwrap();
            let report = validate_theta(&mut cf, 10_000);
            assert!(report.passed(), "closed form gamma {gamma}: {:?}", report.first_violation);
            let mut rf = ThetaSchedule::root_find(gamma).unwrap();
            let report = validate_theta(&mut rf, 10_000);
            assert!(report.passed(), "root find gamma {gamma}: {:?}", report.first_violation);
        }
    }

    #[test]
    fn validate_rejects_fast_decay() {
        // θ_k = 1/k² decays too fast and breaks the ϑ condition early.
        let mut sched = ThetaSchedule::closed_form(5.0, 2.0).unwrap();
        sched.ensure(10);
        for k in 1..sched.cache.len() {
            sched.cache[k] = 1.0 / (k as f64 * k as f64);
        }
        let report = validate_theta(&mut sched, 9);
        assert!(!report.passed());
        let (k, reason) = report.first_violation.unwrap();
        assert!(k <= 3, "violation at k = {k}: {reason}");
    }

    #[test]
    fn sum_vartheta_bound_closed_form() {
        // Σ ϑ_i ≤ 2 + (k + 1 + γ)^γ/γ, checked inside validate_theta; run the
        // long sweep used by the prefactor bound as well.
        let mut sched = ThetaSchedule::closed_form(5.0, 2.0).unwrap();
        sched.ensure(10_000);
        let mut sum = 0.0;
        let cap_const = 2.0 + 4f64.powi(2).max(3f64.powi(2)) / 2.0;
        for k in 0..=10_000usize {
            sum += sched.vartheta(k).unwrap();
            let pref = (4.0 / (k as f64 + 4.0)).powi(2);
            assert!(pref * sum <= cap_const + 1e-9, "k = {k}: {} > {cap_const}", pref * sum);
        }
    }

    #[test]
    fn tolerance_power_rule() {
        let sched = ToleranceSchedule::power_mu(1.1);
        let (eta, mu, nu) = sched.tolerance_at(0, None).unwrap();
        assert_eq!((eta, nu), (0.0, 0.0));
        assert_eq!(mu, 1.0);
        let (_, mu9, _) = ToleranceSchedule::power_mu(3.1).tolerance_at(9, None).unwrap();
        assert!((mu9 - 10f64.powf(-3.1)).abs() < 1e-18);
        let (_, mu_far, _) = sched.tolerance_at(1_000_000, None).unwrap();
        assert_eq!(mu_far, 1e-10);
    }

    #[test]
    fn normalized_mode_requires_norm() {
        let sched = ToleranceSchedule {
            eta: DecayForm::Power { p: 2.0, floor: 0.0 },
            mu: DecayForm::Zero,
            nu: DecayForm::Zero,
            normalization: Normalization::IterateNormalized,
        };
        assert!(sched.tolerance_at(3, None).is_err());
        let (eta, _, _) = sched.tolerance_at(3, Some(4.0)).unwrap();
        assert!((eta - (1.0 / 16.0) / 5.0).abs() < 1e-15);
    }

    #[test]
    fn summability_classes() {
        let all = summability_class(&ToleranceSchedule::power_mu(3.1), 2.0);
        assert!(all.avg_rate && all.last_iterate_rate && all.vibpg_rate);

        let mid = summability_class(&ToleranceSchedule::power_mu(1.1), 2.0);
        assert!(mid.avg_rate && mid.vibpg_rate && !mid.last_iterate_rate);

        let weak = summability_class(&ToleranceSchedule::power_mu(0.1), 2.0);
        assert!(weak.insufficient());
    }

    #[test]
    fn cesaro_running_average_vanishes() {
        // (1/k)·Σ_{i<k} i·α_i for α_i = i^{-2} stays within 10× of the
        // analytic harmonic bound at k = 1e5.
        let k = 100_000usize;
        let mut weighted = 0.0;
        for i in 1..k {
            weighted += i as f64 * (i as f64).powi(-2);
        }
        let running = weighted / k as f64;
        let analytic = ((k as f64).ln() + 1.0) / k as f64;
        assert!(running <= 10.0 * analytic, "running {running}, analytic {analytic}");
    }

    #[test]
    fn accumulator_sums_are_monotone() {
        let mut acc = ErrorAccumulator::for_ibpg(0.3, 1.0);
        let mut prev = (0.0, 0.0, 0.0);
        for k in 0..100 {
            acc.record_ibpg(k, 2.0, 1.0 / (k as f64 + 1.0).powi(2), 0.1, 0.0, 1.0, 0.05);
            let cur = (acc.sum_eta_weighted, acc.sum_mu, acc.sum_k_xi);
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1 && cur.2 >= prev.2);
            prev = cur;
        }
    }
}
