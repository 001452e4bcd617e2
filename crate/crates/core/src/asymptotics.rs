//! Leading-order small-cost formulas for time-based rebalancing.
//!
//! Waiting times between trades are `ε^{2/3}·A`. With `b = ‖β‖₂,₁` and
//! `q = tr(βᵀΣβ)` evaluated along the state path, the leading-order total
//! cost of a rule `A` is
//!
//! ```text
//! TC(A) = E ∫₀ᵀ (γ/4)·q·A + √(2/π)·b/√A dt
//! ```
//!
//! minimized pointwise by `A* = (√(2/π)·b / ((γ/2)·q))^{2/3}`. The realized
//! welfare loss is `ε^{2/3}·TC(A)` over the horizon.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frictionless::{AssumptionCheck, AssumptionPolicy, CachedMerton, MertonState};
use crate::linalg::pairwise_sum;
use crate::market_models::MarketModel;
use crate::simulation::path::PathStepper;
use crate::simulation::{simulate_state_path, RebalanceTo, SimulationConfig, StatePath};

/// Exponent of the cost in the waiting time, `ε^{2/3}`.
pub const TIME_EXPONENT: f64 = 2.0 / 3.0;

fn sqrt_2_over_pi() -> f64 {
    (2.0 / PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Adaptive,
    Constant,
}

#[derive(Debug, Clone)]
enum RuleInner {
    Adaptive {
        model: Arc<dyn MarketModel>,
        gamma: f64,
        policy: AssumptionPolicy,
    },
    Constant {
        a: f64,
    },
}

/// Maps the state at a trading time to the waiting time `ε^α·A(y)` until the next one.
#[derive(Debug, Clone)]
pub struct DiscretizationRule {
    inner: RuleInner,
    exponent: f64,
}

impl DiscretizationRule {
    pub fn constant(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Rule(format!("constant rule needs A > 0, got {a}")));
        }
        Ok(Self {
            inner: RuleInner::Constant { a },
            exponent: TIME_EXPONENT,
        })
    }

    pub fn kind(&self) -> RuleKind {
        match self.inner {
            RuleInner::Adaptive { .. } => RuleKind::Adaptive,
            RuleInner::Constant { .. } => RuleKind::Constant,
        }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Same rule with waiting times `ε^α·A`; only used by the scaling diagnostics.
    pub(crate) fn with_exponent(&self, alpha: f64) -> Self {
        Self {
            inner: self.inner.clone(),
            exponent: alpha,
        }
    }

    /// The constant `A` of a constant rule.
    pub fn constant_value(&self) -> Option<f64> {
        match self.inner {
            RuleInner::Constant { a } => Some(a),
            RuleInner::Adaptive { .. } => None,
        }
    }

    /// `A(y)` in years.
    pub fn a_at(&self, y: &[f64]) -> Result<f64> {
        match &self.inner {
            RuleInner::Constant { a } => Ok(*a),
            RuleInner::Adaptive {
                model,
                gamma,
                policy,
            } => {
                let state = MertonState::compute(model.as_ref(), y, *gamma)?;
                state.assumption.enforce(*policy)?;
                optimal_a(&state)
            }
        }
    }

    pub(crate) fn enforce_policy(&self, check: &AssumptionCheck) -> Result<()> {
        match &self.inner {
            RuleInner::Adaptive { policy, .. } => check.enforce(*policy),
            RuleInner::Constant { .. } => Ok(()),
        }
    }

    /// `A` at an already computed state; constant rules ignore it.
    pub fn a_at_state(&self, state: &MertonState) -> Result<f64> {
        match &self.inner {
            RuleInner::Constant { a } => Ok(*a),
            RuleInner::Adaptive { policy, .. } => {
                state.assumption.enforce(*policy)?;
                optimal_a(state)
            }
        }
    }

    /// Waiting time `ε^α·A(y)` in years.
    pub fn waiting_time(&self, y: &[f64], epsilon: f64) -> Result<f64> {
        let dt = epsilon.powf(self.exponent) * self.a_at(y)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Rule(format!(
                "non-positive waiting time {dt} at y = {y:?}, ε = {epsilon}"
            )));
        }
        Ok(dt)
    }
}

/// `A*(y) = (√(2/π)‖β‖₂,₁ / ((γ/2) tr(βᵀΣβ)))^{2/3}`.
pub fn optimal_a(state: &MertonState) -> Result<f64> {
    optimal_a_from(state.beta_l21(), state.beta_cov_trace(), state.gamma)
}

/// [`optimal_a`] from `‖β‖₂,₁` and `tr(βᵀΣβ)`.
pub fn optimal_a_from(norm: f64, trace: f64, gamma: f64) -> Result<f64> {
    if !(norm > 0.0) || !(trace > 0.0) {
        return Err(Error::DegenerateTarget { norm });
    }
    Ok((sqrt_2_over_pi() * norm / (0.5 * gamma * trace)).powf(2.0 / 3.0))
}

/// The asymptotically optimal state-dependent rule.
///
/// The rule is checked once at `y_check` (the model's default state when
/// `None`) so degenerate targets surface immediately.
pub fn optimal_rule(
    model: Arc<dyn MarketModel>,
    gamma: f64,
    policy: AssumptionPolicy,
    y_check: Option<&[f64]>,
) -> Result<DiscretizationRule> {
    let rule = DiscretizationRule {
        inner: RuleInner::Adaptive {
            model: model.clone(),
            gamma,
            policy,
        },
        exponent: TIME_EXPONENT,
    };
    let y = y_check.map_or_else(|| model.default_state(), <[f64]>::to_vec);
    rule.a_at(&y)?;
    Ok(rule)
}

/// Leading-order integrands at one state, before the `ε^{2/3}` prefactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    /// `√(2/π)‖β‖₂,₁/√A`.
    pub tac_rate: f64,
    /// `(γ/4) tr(βᵀΣβ)·A`.
    pub de_rate: f64,
    pub tc_rate: f64,
}

impl CostBreakdown {
    pub fn at(state: &MertonState, a: f64) -> Self {
        let tac_rate = sqrt_2_over_pi() * state.beta_l21() / a.sqrt();
        let de_rate = 0.25 * state.gamma * state.beta_cov_trace() * a;
        Self {
            tac_rate,
            de_rate,
            tc_rate: tac_rate + de_rate,
        }
    }
}

/// `(3/2)(√(2/π)‖β‖)^{2/3}((γ/2)tr(βᵀΣβ))^{1/3}`, the minimal cost rate at a state.
pub fn optimal_cost_rate(state: &MertonState) -> f64 {
    let b = sqrt_2_over_pi() * state.beta_l21();
    let q = 0.5 * state.gamma * state.beta_cov_trace();
    1.5 * b.powf(2.0 / 3.0) * q.powf(1.0 / 3.0)
}

/// Grid and sample for expectations over state paths.
///
/// Paths come from the simulation module's generator with the same seed
/// convention, so expectations and simulations share their draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationGrid {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub y0: Option<Vec<f64>>,
}

impl ExpectationGrid {
    pub fn new(horizon: f64, dt: f64, n_paths: usize, seed: u64, y0: Option<Vec<f64>>) -> Self {
        Self {
            horizon,
            dt,
            n_paths,
            seed,
            y0,
        }
    }

    fn sim_config(&self, gamma: f64) -> SimulationConfig {
        SimulationConfig {
            horizon: self.horizon,
            dt: self.dt,
            n_paths: self.n_paths,
            epsilon: 0.0,
            gamma,
            y0: self.y0.clone(),
            seed: self.seed,
            control_variate: false,
            allow_assumption_violation: true,
        }
    }
}

impl From<&SimulationConfig> for ExpectationGrid {
    fn from(c: &SimulationConfig) -> Self {
        Self::new(c.horizon, c.dt, c.n_paths, c.seed, c.y0.clone())
    }
}

/// Expected time integrals over `[0, T]` of the quantities entering the formulas.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathIntegrals {
    /// `E ∫ √(2/π)‖β‖₂,₁ dt`.
    pub tac_weight: f64,
    /// `E ∫ (γ/2) tr(βᵀΣβ) dt`.
    pub de_weight: f64,
    /// `E ∫ (3/2)(√(2/π)‖β‖)^{2/3}((γ/2)tr)^{1/3} dt`.
    pub optimal_cost: f64,
    /// `E ∫ μᵀΣ⁻¹μ/(2γ) dt`.
    pub frictionless: f64,
    /// `E ∫ √(2/π)‖β‖/√A dt` for the supplied rule (zero without one).
    pub tac_constant: f64,
    /// `E ∫ ½ tr(βᵀΣβ)·A dt` for the supplied rule (zero without one).
    pub de_constant: f64,
}

impl PathIntegrals {
    fn scaled(self, c: f64) -> Self {
        Self {
            tac_weight: self.tac_weight * c,
            de_weight: self.de_weight * c,
            optimal_cost: self.optimal_cost * c,
            frictionless: self.frictionless * c,
            tac_constant: self.tac_constant * c,
            de_constant: self.de_constant * c,
        }
    }
}

struct PointValues {
    tac_weight: f64,
    de_weight: f64,
    optimal_cost: f64,
    frictionless: f64,
    tac_constant: f64,
    de_constant: f64,
}

fn point_values(
    norm: f64,
    trace: f64,
    rate: f64,
    gamma: f64,
    check: &AssumptionCheck,
    rule: Option<&DiscretizationRule>,
    policy: AssumptionPolicy,
) -> Result<PointValues> {
    check.enforce(policy)?;
    let (tac_constant, de_constant) = match rule {
        Some(rule) => {
            let a = match rule.constant_value() {
                Some(a) => a,
                None => {
                    rule.enforce_policy(check)?;
                    optimal_a_from(norm, trace, gamma)?
                }
            };
            (sqrt_2_over_pi() * norm / a.sqrt(), 0.5 * trace * a)
        }
        None => (0.0, 0.0),
    };
    let b = sqrt_2_over_pi() * norm;
    let q = 0.5 * gamma * trace;
    Ok(PointValues {
        tac_weight: b,
        de_weight: q,
        optimal_cost: 1.5 * b.powf(2.0 / 3.0) * q.powf(1.0 / 3.0),
        frictionless: rate,
        tac_constant,
        de_constant,
    })
}

fn state_values(
    state: &MertonState,
    rule: Option<&DiscretizationRule>,
    policy: AssumptionPolicy,
) -> Result<PointValues> {
    point_values(
        state.beta_l21(),
        state.beta_cov_trace(),
        state.frictionless_rate,
        state.gamma,
        &state.assumption,
        rule,
        policy,
    )
}

/// Trapezoid integrals along path `path_index`, stepping the same stream as
/// the wealth simulation without storing the path.
fn integrate_path(
    model: &dyn MarketModel,
    gamma: f64,
    config: &SimulationConfig,
    path_index: u64,
    rule: Option<&DiscretizationRule>,
    policy: AssumptionPolicy,
) -> Result<PathIntegrals> {
    let dims = model.dims();
    let n = config.n_steps();
    let dt = config.dt;
    let y0 = config.initial_state(model);
    let mut stepper = PathStepper::new(model, &y0, dt, config.seed, path_index)?;
    let mut cached = CachedMerton::new(model, &y0, gamma)?;
    let mut raw = model.raw_coefficients(&y0);
    let mut shocks = vec![0.0; dims.drivers];
    let mut log_returns = vec![0.0; dims.assets];
    let mut acc = PathIntegrals::default();
    for k in 0..=n {
        if k > 0 {
            let coeffs = cached.as_ref().map_or(&raw, CachedMerton::raw);
            stepper.step(coeffs, &mut shocks, &mut log_returns)?;
            match &mut cached {
                Some(c) => c.evaluate(model, stepper.state())?,
                None => model.coefficients_into(stepper.state(), &mut raw),
            }
        }
        let v = match &cached {
            Some(c) => point_values(
                c.beta_l21(),
                c.beta_cov_trace(),
                c.frictionless_rate,
                gamma,
                &c.assumption(),
                rule,
                policy,
            )?,
            None => state_values(&MertonState::compute(model, stepper.state(), gamma)?, rule, policy)?,
        };
        let w = if k == 0 || k == n { 0.5 } else { 1.0 } * dt;
        acc.tac_weight += w * v.tac_weight;
        acc.de_weight += w * v.de_weight;
        acc.optimal_cost += w * v.optimal_cost;
        acc.frictionless += w * v.frictionless;
        acc.tac_constant += w * v.tac_constant;
        acc.de_constant += w * v.de_constant;
    }
    Ok(acc)
}

/// Expected integrals over `[0, T]`: exact for constant-coefficient models,
/// trapezoid-rule Monte Carlo over simulated state paths otherwise.
pub fn path_integrals(
    model: &dyn MarketModel,
    gamma: f64,
    grid: &ExpectationGrid,
    rule: Option<&DiscretizationRule>,
    policy: AssumptionPolicy,
) -> Result<PathIntegrals> {
    let config = grid.sim_config(gamma);
    config.validate()?;
    if model.is_constant() {
        let state = MertonState::compute(model, &[], gamma)?;
        let v = state_values(&state, rule, policy)?;
        let unit = PathIntegrals {
            tac_weight: v.tac_weight,
            de_weight: v.de_weight,
            optimal_cost: v.optimal_cost,
            frictionless: v.frictionless,
            tac_constant: v.tac_constant,
            de_constant: v.de_constant,
        };
        return Ok(unit.scaled(grid.horizon));
    }
    let per_path = (0..grid.n_paths as u64)
        .into_par_iter()
        .map(|i| integrate_path(model, gamma, &config, i, rule, policy))
        .collect::<Result<Vec<_>>>()?;
    let mean = |f: fn(&PathIntegrals) -> f64| {
        pairwise_sum(&per_path.iter().map(f).collect::<Vec<_>>()) / per_path.len() as f64
    };
    Ok(PathIntegrals {
        tac_weight: mean(|p| p.tac_weight),
        de_weight: mean(|p| p.de_weight),
        optimal_cost: mean(|p| p.optimal_cost),
        frictionless: mean(|p| p.frictionless),
        tac_constant: mean(|p| p.tac_constant),
        de_constant: mean(|p| p.de_constant),
    })
}

/// Optimal constant rule `A = (E∫√(2/π)‖β‖ / E∫(γ/2)tr(βᵀΣβ))^{2/3}`.
pub fn constant_rule(
    model: &dyn MarketModel,
    gamma: f64,
    grid: &ExpectationGrid,
    policy: AssumptionPolicy,
) -> Result<DiscretizationRule> {
    let ints = path_integrals(model, gamma, grid, None, policy)?;
    constant_rule_from(&ints)
}

pub fn constant_rule_from(ints: &PathIntegrals) -> Result<DiscretizationRule> {
    if !(ints.tac_weight > 0.0 && ints.de_weight > 0.0) {
        return Err(Error::DegenerateTarget {
            norm: ints.tac_weight,
        });
    }
    DiscretizationRule::constant((ints.tac_weight / ints.de_weight).powf(2.0 / 3.0))
}

/// Closed-form minimal cost of the best constant rule,
/// `(3/2)(E∫√(2/π)‖β‖)^{2/3}(E∫(γ/2)tr)^{1/3}`.
pub fn constant_rule_cost(ints: &PathIntegrals) -> f64 {
    1.5 * ints.tac_weight.powf(2.0 / 3.0) * ints.de_weight.powf(1.0 / 3.0)
}

/// Leading-order total cost `TC(A)` over the horizon for an arbitrary rule.
pub fn total_cost(
    model: &dyn MarketModel,
    gamma: f64,
    rule: &DiscretizationRule,
    grid: &ExpectationGrid,
    policy: AssumptionPolicy,
) -> Result<f64> {
    let ints = path_integrals(model, gamma, grid, Some(rule), policy)?;
    Ok(ints.tac_constant + 0.5 * gamma * ints.de_constant)
}

/// `TC(A*)` from the closed form `(3/2)E∫(√(2/π)‖β‖)^{2/3}((γ/2)tr)^{1/3} dt`.
pub fn optimal_total_cost(
    model: &dyn MarketModel,
    gamma: f64,
    grid: &ExpectationGrid,
    policy: AssumptionPolicy,
) -> Result<f64> {
    Ok(path_integrals(model, gamma, grid, None, policy)?.optimal_cost)
}

/// Annualized leading-order loss `ε^{2/3}·TC/T`.
pub fn loss_rate(total_cost: f64, epsilon: f64, horizon: f64) -> f64 {
    epsilon.powf(TIME_EXPONENT) * total_cost / horizon
}

/// Single-asset Black–Scholes closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bs1dClosedForms {
    pub w_star: f64,
    pub a_star: f64,
    /// `ε^{2/3}A*` in years.
    pub waiting_time: f64,
    /// `σ²(27/(8π)·γε²(w*(1−w*))⁴)^{1/3}` per year.
    pub time_based_loss_rate: f64,
    /// `σ²(9/32·γε²(w*(1−w*))⁴)^{1/3}` per year.
    pub move_based_loss_rate: f64,
    pub ratio: f64,
}

pub fn bs1d_closed_forms(mu: f64, sigma: f64, gamma: f64, epsilon: f64) -> Result<Bs1dClosedForms> {
    if !(gamma > 0.0 && sigma > 0.0 && epsilon > 0.0) {
        return Err(Error::Parameter(format!(
            "need γ, σ, ε > 0, got γ={gamma}, σ={sigma}, ε={epsilon}"
        )));
    }
    let w = mu / (gamma * sigma * sigma);
    if !(w > 0.0 && w < 1.0) {
        return Err(Error::Assumption(format!("w* = {w} outside (0, 1)")));
    }
    let u = w * (1.0 - w);
    let a_star = ((8.0 / PI).sqrt() / (gamma * sigma.powi(3) * u)).powf(2.0 / 3.0);
    let base = gamma * epsilon * epsilon * u.powi(4);
    let time_based_loss_rate = sigma * sigma * (27.0 / (8.0 * PI) * base).cbrt();
    let move_based_loss_rate = sigma * sigma * (9.0 / 32.0 * base).cbrt();
    Ok(Bs1dClosedForms {
        w_star: w,
        a_star,
        waiting_time: epsilon.powf(TIME_EXPONENT) * a_star,
        time_based_loss_rate,
        move_based_loss_rate,
        ratio: time_based_loss_rate / move_based_loss_rate,
    })
}

/// Annualized leading-order loss of a univariate band of constant half-width
/// `δ` whose weight gap diffuses with volatility `b`, for an asset with
/// variance `s2`.
///
/// Trading back to the target gives `εb²/δ + γs2·δ²/12`; reflection at the
/// band edge gives `εb²/(2δ) + γs2·δ²/6`.
pub fn band_loss_rate_1d(b: f64, s2: f64, gamma: f64, epsilon: f64, delta: f64, to: RebalanceTo) -> f64 {
    match to {
        RebalanceTo::Target => epsilon * b * b / delta + gamma * s2 * delta * delta / 12.0,
        RebalanceTo::Boundary => 0.5 * epsilon * b * b / delta + gamma * s2 * delta * delta / 6.0,
    }
}

/// Trading times `τ₀ = 0, τⱼ = τⱼ₋₁ + ε^{2/3}A(Y_{τⱼ₋₁})` strictly below `T`.
///
/// The state at a trading time is read from the last grid point not after it.
pub fn schedule_trading_times(
    rule: &DiscretizationRule,
    epsilon: f64,
    horizon: f64,
    path: &StatePath,
) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!("ε must be positive, got {epsilon}")));
    }
    let mut times = vec![0.0];
    let mut t = 0.0;
    loop {
        let step = rule.waiting_time(path.state_at(t), epsilon)?;
        t += step;
        if t >= horizon {
            break;
        }
        times.push(t);
    }
    Ok(times)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NondegeneracyReport {
    pub n_samples: usize,
    pub min_beta_l21: f64,
    /// Smallest model-specific analytic lower bound over the samples, if any.
    pub min_analytic_bound: Option<f64>,
    /// Samples where the analytic bound exceeded the actual norm.
    pub bound_violations: usize,
    pub min_a_star: Option<f64>,
    pub passed: bool,
}

/// Minimum of `‖β(y)‖₂,₁` over sample states; passes iff it is positive.
pub fn check_nondegeneracy(
    model: &dyn MarketModel,
    gamma: f64,
    sample_states: &[Vec<f64>],
) -> Result<NondegeneracyReport> {
    if sample_states.is_empty() {
        return Err(Error::Parameter("no sample states".into()));
    }
    let mut min_norm = f64::INFINITY;
    let mut min_bound: Option<f64> = None;
    let mut min_a: Option<f64> = None;
    let mut violations = 0;
    for y in sample_states {
        let state = MertonState::compute(model, y, gamma)?;
        let norm = state.beta_l21();
        min_norm = min_norm.min(norm);
        if let Some(b) = model.nondegeneracy_bound(&state) {
            min_bound = Some(min_bound.map_or(b, |m| m.min(b)));
            if b > norm * (1.0 + 1e-12) {
                violations += 1;
            }
        }
        if let Ok(a) = optimal_a(&state) {
            min_a = Some(min_a.map_or(a, |m| m.min(a)));
        }
    }
    Ok(NondegeneracyReport {
        n_samples: sample_states.len(),
        min_beta_l21: min_norm,
        min_analytic_bound: min_bound,
        bound_violations: violations,
        min_a_star: min_a,
        passed: min_norm > 0.0,
    })
}

/// Grid states visited by simulated paths, every `stride`-th point.
pub fn sample_states(
    model: &dyn MarketModel,
    grid: &ExpectationGrid,
    stride: usize,
) -> Result<Vec<Vec<f64>>> {
    let config = grid.sim_config(1.0);
    config.validate()?;
    if model.dims().state == 0 {
        return Ok(vec![Vec::new()]);
    }
    let stride = stride.max(1);
    let mut out = Vec::new();
    for i in 0..grid.n_paths as u64 {
        let path = simulate_state_path(model, &config, i)?;
        out.extend(path.states.into_iter().step_by(stride));
    }
    Ok(out)
}
