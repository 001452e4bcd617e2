//! Frictionless Merton portfolio and the diffusion geometry around it.
//!
//! At a state `y` the Merton weight is `w* = Σ⁻¹μ/γ`. Its diffusion
//! coefficient `σ̃ = (∂w*/∂y)·g` and the matrix
//!
//! ```text
//! βⁱ = σ̃ⁱ − w*ⁱ (σⁱ − Σₖ w*ᵏ σᵏ)
//! ```
//!
//! (the gap between the target's diffusion and that of an uncontrolled
//! buy-and-hold weight) are the only model statistics entering the
//! small-cost formulas.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::market_models::{
    evaluate_coefficients, jacobians, Coefficients, Jacobians, MarketModel, RawCoefficients,
};

/// Whether asymptotic formulas accept states where the Merton weights leave
/// the long-only, unlevered simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssumptionPolicy {
    #[default]
    Enforce,
    Allow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    /// `w*[index]` outside `[0, 1)`.
    Weight { index: usize, value: f64 },
    /// `Σ w*` outside `(0, 1]`.
    Total(f64),
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Weight { index, value } => write!(f, "w*[{index}] = {value:.6} outside [0, 1)"),
            Self::Total(v) => write!(f, "sum of w* = {v:.6} outside (0, 1]"),
        }
    }
}

/// Result of checking `0 ≤ w*ⁱ < 1` and `0 < Σ w*ⁱ ≤ 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssumptionCheck {
    pub violations: Vec<Violation>,
}

impl AssumptionCheck {
    pub fn evaluate(w: &[f64]) -> Self {
        let mut violations = Vec::new();
        for (index, &value) in w.iter().enumerate() {
            if !(0.0..1.0).contains(&value) {
                violations.push(Violation::Weight { index, value });
            }
        }
        let total: f64 = w.iter().sum();
        if !(total > 0.0 && total <= 1.0) {
            violations.push(Violation::Total(total));
        }
        Self { violations }
    }

    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn message(&self) -> String {
        self.violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ")
    }

    pub fn enforce(&self, policy: AssumptionPolicy) -> Result<()> {
        if policy == AssumptionPolicy::Enforce && !self.holds() {
            return Err(Error::Assumption(self.message()));
        }
        Ok(())
    }
}

/// Merton weights with the long-only check attached.
#[derive(Debug, Clone, PartialEq)]
pub struct MertonWeights {
    pub weights: Vec<f64>,
    pub assumption: AssumptionCheck,
}

/// Everything derived from the model at one state point.
#[derive(Debug, Clone)]
pub struct MertonState {
    pub y: Vec<f64>,
    pub gamma: f64,
    pub mu: Vec<f64>,
    /// Asset loadings `σ`, `m × d`.
    pub sigma: Matrix,
    pub cov: Matrix,
    pub cov_inv: Matrix,
    pub w_star: Vec<f64>,
    /// Diffusion coefficient of `t ↦ w*(Y_t)`, `m × d`.
    pub sigma_tilde: Matrix,
    pub beta: Matrix,
    /// `μᵀΣ⁻¹μ / (2γ)`.
    pub frictionless_rate: f64,
    pub assumption: AssumptionCheck,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Parameter(format!(
            "risk aversion must be positive, got {gamma}"
        )));
    }
    Ok(())
}

fn weights_from(coeffs: &Coefficients, gamma: f64) -> Vec<f64> {
    let mut w = coeffs.chol.solve(&coeffs.mu);
    w.iter_mut().for_each(|v| *v /= gamma);
    w
}

/// `Σ⁻¹(y)μ(y)/γ`, with Assumption-style violations flagged, not clipped.
pub fn merton_weights(model: &dyn MarketModel, y: &[f64], gamma: f64) -> Result<MertonWeights> {
    check_gamma(gamma)?;
    let coeffs = evaluate_coefficients(model, y)?;
    let weights = weights_from(&coeffs, gamma);
    let assumption = AssumptionCheck::evaluate(&weights);
    Ok(MertonWeights {
        weights,
        assumption,
    })
}

/// Diffusion of the Merton weight from the Itô chain rule:
///
/// ```text
/// σ̃ⁱ = Σ_q [ (1/γ) Σₗ ξⁱˡ ∂_q μˡ − Σₖₗ ξⁱᵏ ∂_q Σᵏˡ w*ˡ ] g_q
/// ```
fn diffusion_from(coeffs: &Coefficients, jac: &Jacobians, w: &[f64], gamma: f64) -> Matrix {
    let m = w.len();
    let p = coeffs.g.rows();
    let d = coeffs.sigma.cols();
    let mut dw_dy = Matrix::zeros(m, p);
    let mut tmp = vec![0.0; m];
    for q in 0..p {
        // tmp = ∂_q μ / γ − ∂_q Σ · w*
        let dcov = &jac.dcov_dy[q];
        for k in 0..m {
            tmp[k] = jac.dmu_dy[(k, q)] / gamma - dot(dcov.row(k), w);
        }
        let col = coeffs.chol.solve(&tmp);
        for i in 0..m {
            dw_dy[(i, q)] = col[i];
        }
    }
    if p == 0 {
        return Matrix::zeros(m, d);
    }
    dw_dy.matmul(&coeffs.g)
}

fn beta_from(sigma: &Matrix, w: &[f64], sigma_tilde: &Matrix) -> Matrix {
    let (m, d) = sigma.shape();
    let mut portfolio = vec![0.0; d];
    for k in 0..m {
        for j in 0..d {
            portfolio[j] += w[k] * sigma[(k, j)];
        }
    }
    Matrix::from_fn(m, d, |i, j| sigma_tilde[(i, j)] - w[i] * (sigma[(i, j)] - portfolio[j]))
}

/// Diffusion coefficient `σ̃` of `t ↦ w*(Y_t)`, an `m × d` matrix.
pub fn merton_diffusion(model: &dyn MarketModel, y: &[f64], gamma: f64) -> Result<Matrix> {
    Ok(MertonState::compute(model, y, gamma)?.sigma_tilde)
}

/// `βⁱ = σ̃ⁱ − w*ⁱ(σⁱ − Σₖ w*ᵏσᵏ)`, rows in asset order.
pub fn beta_matrix(model: &dyn MarketModel, y: &[f64], gamma: f64) -> Result<Matrix> {
    Ok(MertonState::compute(model, y, gamma)?.beta)
}

/// Optimal frictionless performance rate `μᵀΣ⁻¹μ/(2γ)` (per year).
pub fn frictionless_rate(model: &dyn MarketModel, y: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let coeffs = evaluate_coefficients(model, y)?;
    let w = weights_from(&coeffs, gamma);
    Ok(0.5 * dot(&coeffs.mu, &w))
}

impl MertonState {
    pub fn compute(model: &dyn MarketModel, y: &[f64], gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let coeffs = evaluate_coefficients(model, y)?;
        let jac = jacobians(model, y)?;
        Ok(Self::from_parts(y, gamma, coeffs, &jac))
    }

    pub fn from_parts(y: &[f64], gamma: f64, coeffs: Coefficients, jac: &Jacobians) -> Self {
        let w_star = weights_from(&coeffs, gamma);
        let sigma_tilde = diffusion_from(&coeffs, jac, &w_star, gamma);
        let beta = beta_from(&coeffs.sigma, &w_star, &sigma_tilde);
        let frictionless_rate = 0.5 * dot(&coeffs.mu, &w_star);
        let assumption = AssumptionCheck::evaluate(&w_star);
        Self {
            y: y.to_vec(),
            gamma,
            mu: coeffs.mu,
            sigma: coeffs.sigma,
            cov: coeffs.cov,
            cov_inv: coeffs.cov_inv,
            w_star,
            sigma_tilde,
            beta,
            frictionless_rate,
            assumption,
        }
    }

    /// `‖β‖₂,₁`.
    pub fn beta_l21(&self) -> f64 {
        self.beta.l21_norm()
    }

    /// `tr(βᵀ Σ β)`.
    pub fn beta_cov_trace(&self) -> f64 {
        let (m, d) = self.beta.shape();
        let mut acc = 0.0;
        let mut col = vec![0.0; m];
        for j in 0..d {
            for i in 0..m {
                col[i] = self.beta[(i, j)];
            }
            acc += self.cov.quad_form(&col);
        }
        acc
    }

    /// Checks `Σ·w* = μ/γ`; returns the max-abs residual.
    pub fn merton_residual(&self) -> f64 {
        let lhs = self.cov.mul_vec(&self.w_star);
        lhs.iter()
            .zip(&self.mu)
            .map(|(a, m)| (a - m / self.gamma).abs())
            .fold(0.0, f64::max)
    }
}

/// Merton quantities along a path for models whose covariance does not
/// depend on the state, reusing `Σ⁻¹` and all buffers between evaluations.
#[derive(Debug, Clone)]
pub(crate) struct CachedMerton {
    gamma: f64,
    raw: RawCoefficients,
    cov: Matrix,
    cov_inv: Matrix,
    pub w_star: Vec<f64>,
    pub sigma_tilde: Matrix,
    pub beta: Matrix,
    portfolio: Vec<f64>,
    pub frictionless_rate: f64,
}

impl CachedMerton {
    /// `None` unless the covariance is constant and Jacobians are analytic.
    pub(crate) fn new(model: &dyn MarketModel, y: &[f64], gamma: f64) -> Result<Option<Self>> {
        check_gamma(gamma)?;
        if !model.constant_covariance() || model.analytic_jacobians(y).is_none() {
            return Ok(None);
        }
        let c = evaluate_coefficients(model, y)?;
        let (m, d) = c.sigma.shape();
        let mut me = Self {
            gamma,
            raw: RawCoefficients {
                mu: c.mu,
                sigma: c.sigma,
                b: c.b,
                g: c.g,
            },
            cov: c.cov,
            cov_inv: c.cov_inv,
            w_star: vec![0.0; m],
            sigma_tilde: Matrix::zeros(m, d),
            beta: Matrix::zeros(m, d),
            portfolio: vec![0.0; d],
            frictionless_rate: 0.0,
        };
        me.evaluate(model, y)?;
        Ok(Some(me))
    }

    pub(crate) fn evaluate(&mut self, model: &dyn MarketModel, y: &[f64]) -> Result<()> {
        model.coefficients_into(y, &mut self.raw);
        let jac = model
            .analytic_jacobians(y)
            .ok_or_else(|| Error::Numerical("analytic Jacobians disappeared".into()))?;
        let (m, d) = self.raw.sigma.shape();
        let p = self.raw.g.rows();
        for i in 0..m {
            self.w_star[i] = dot(self.cov_inv.row(i), &self.raw.mu) / self.gamma;
        }
        self.frictionless_rate = 0.5 * dot(&self.raw.mu, &self.w_star);
        for j in 0..d {
            self.portfolio[j] = (0..m).map(|k| self.w_star[k] * self.raw.sigma[(k, j)]).sum();
        }
        for i in 0..m {
            for j in 0..d {
                let mut v = 0.0;
                for q in 0..p {
                    let mut dw = 0.0;
                    for k in 0..m {
                        dw += self.cov_inv[(i, k)] * jac.dmu_dy[(k, q)];
                    }
                    v += dw / self.gamma * self.raw.g[(q, j)];
                }
                self.sigma_tilde[(i, j)] = v;
                self.beta[(i, j)] = v - self.w_star[i] * (self.raw.sigma[(i, j)] - self.portfolio[j]);
            }
        }
        Ok(())
    }

    pub(crate) fn sigma(&self) -> &Matrix {
        &self.raw.sigma
    }

    pub(crate) fn raw(&self) -> &RawCoefficients {
        &self.raw
    }

    pub(crate) fn beta_l21(&self) -> f64 {
        self.beta.l21_norm()
    }

    pub(crate) fn beta_cov_trace(&self) -> f64 {
        let m = self.beta.rows();
        let mut acc = 0.0;
        for i in 0..m {
            for k in 0..m {
                acc += self.cov[(i, k)] * dot(self.beta.row(i), self.beta.row(k));
            }
        }
        acc
    }

    pub(crate) fn assumption(&self) -> AssumptionCheck {
        AssumptionCheck::evaluate(&self.w_star)
    }
}
