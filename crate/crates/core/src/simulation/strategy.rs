use serde::{Deserialize, Serialize};

use crate::asymptotics::DiscretizationRule;
use crate::error::{Error, Result};
use crate::frictionless::{AssumptionPolicy, MertonState};
use crate::linalg::{dot, Matrix};
use crate::market_models::MarketModel;

/// Where a move-based strategy trades to once a weight leaves its band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebalanceTo {
    /// Back to the Merton weight.
    Target,
    /// To the nearest edge of the no-trade band, i.e. reflection.
    #[default]
    Boundary,
}

/// Half-width of a no-trade band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HalfWidth {
    /// `δ(y) = (3ε/(2γ)·‖bⁱ‖²/‖σⁱ‖²)^{1/3}` evaluated at the current state.
    Optimal,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub enum Strategy {
    TimeBased(DiscretizationRule),
    /// Calendar rebalancing every `interval` years; `interval ≤ dt` trades at every grid point.
    Periodic { interval: f64 },
    BuyAndHold,
    MoveBased1D {
        halfwidth: HalfWidth,
        rebalance_to: RebalanceTo,
    },
    PastedMoveBased {
        halfwidth: HalfWidth,
        rebalance_to: RebalanceTo,
    },
}

impl Strategy {
    pub fn move_based() -> Self {
        Self::MoveBased1D {
            halfwidth: HalfWidth::Optimal,
            rebalance_to: RebalanceTo::Boundary,
        }
    }

    pub fn pasted() -> Self {
        Self::PastedMoveBased {
            halfwidth: HalfWidth::Optimal,
            rebalance_to: RebalanceTo::Boundary,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::TimeBased(rule) if rule.constant_value().is_some() => "constant_frequency",
            Self::TimeBased(_) => "time_based",
            Self::Periodic { .. } => "periodic",
            Self::BuyAndHold => "buy_and_hold",
            Self::MoveBased1D { .. } => "move_based",
            Self::PastedMoveBased { .. } => "pasted_move_based",
        }
    }

    pub fn check_admissible(&self, model: &dyn MarketModel) -> Result<()> {
        match self {
            Self::MoveBased1D { .. } if model.dims().assets != 1 => Err(Error::Parameter(format!(
                "univariate move-based strategy needs one asset, model has {}",
                model.dims().assets
            ))),
            Self::MoveBased1D { halfwidth: HalfWidth::Fixed(h), .. }
            | Self::PastedMoveBased { halfwidth: HalfWidth::Fixed(h), .. }
                if !(*h >= 0.0) =>
            {
                Err(Error::Parameter(format!("negative half-width {h}")))
            }
            Self::Periodic { interval } if !(*interval > 0.0) => Err(Error::Parameter(format!(
                "rebalancing interval must be positive, got {interval}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Per-asset no-trade half-widths `(3ε/(2γ)·‖bⁱ‖²/‖σⁱ‖²)^{1/3}` with
/// `bⁱ = σ̃ⁱ − w*ⁱ(1 − w*ⁱ)σⁱ`, the diffusion of asset `i`'s own weight
/// gap when it is rebalanced in isolation.
pub fn pasted_halfwidths(state: &MertonState, epsilon: f64) -> Vec<f64> {
    let mut out = vec![0.0; state.w_star.len()];
    halfwidths_into(
        &state.w_star,
        &state.sigma,
        &state.sigma_tilde,
        state.gamma,
        epsilon,
        &mut out,
    );
    out
}

pub(crate) fn halfwidths_into(
    w_star: &[f64],
    sigma: &Matrix,
    sigma_tilde: &Matrix,
    gamma: f64,
    epsilon: f64,
    out: &mut [f64],
) {
    let d = sigma.cols();
    for (i, h) in out.iter_mut().enumerate() {
        let w = w_star[i];
        let sig = sigma.row(i);
        let mut nb2 = 0.0;
        for j in 0..d {
            let b = sigma_tilde[(i, j)] - w * (1.0 - w) * sig[j];
            nb2 += b * b;
        }
        let s2 = dot(sig, sig);
        *h = if s2 == 0.0 {
            0.0
        } else {
            (1.5 * epsilon / gamma * nb2 / s2).cbrt()
        };
    }
}

/// Univariate no-trade half-width; for constant coefficients this is
/// `(3ε/(2γ)·(w*(1−w*))²)^{1/3}`.
pub fn move_based_halfwidth_1d(
    model: &dyn MarketModel,
    y: &[f64],
    gamma: f64,
    epsilon: f64,
    policy: AssumptionPolicy,
) -> Result<f64> {
    if model.dims().assets != 1 {
        return Err(Error::Parameter("univariate half-width needs one asset".into()));
    }
    let state = MertonState::compute(model, y, gamma)?;
    let w = state.w_star[0];
    if policy == AssumptionPolicy::Enforce && !(w > 0.0 && w < 1.0) {
        return Err(Error::Assumption(format!("w* = {w} outside (0, 1)")));
    }
    Ok(pasted_halfwidths(&state, epsilon)[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_models::BlackScholesModel;

    #[test]
    fn table1_halfwidth() {
        let model = BlackScholesModel::univariate(0.08, 0.16).unwrap();
        let h = move_based_halfwidth_1d(&model, &[], 5.0, 0.01, AssumptionPolicy::Enforce).unwrap();
        let oracle = (3.0 * 0.01 / (2.0 * 5.0) * 0.234375f64.powi(2)).cbrt();
        assert!((h - oracle).abs() < 1e-14);
        assert!((h - 0.05482).abs() < 1e-5);
        let tiny = move_based_halfwidth_1d(&model, &[], 5.0, 1e-12, AssumptionPolicy::Enforce).unwrap();
        assert!(tiny < 1e-4);
    }

    #[test]
    fn halfwidth_rejects_leverage() {
        let model = BlackScholesModel::univariate(0.08, 0.16).unwrap();
        let err = move_based_halfwidth_1d(&model, &[], 1.0, 0.01, AssumptionPolicy::Enforce);
        assert!(matches!(err, Err(Error::Assumption(_))));
    }

    #[test]
    fn pasted_width_of_uncorrelated_assets_is_univariate() {
        let corr = crate::market_models::correlation_2x2(0.0);
        let two = BlackScholesModel::new(vec![0.08, 0.04], vec![0.16, 0.2], &corr).unwrap();
        let state = MertonState::compute(&two, &[], 5.0).unwrap();
        let h = pasted_halfwidths(&state, 0.01);
        let one = BlackScholesModel::univariate(0.08, 0.16).unwrap();
        let h1 = move_based_halfwidth_1d(&one, &[], 5.0, 0.01, AssumptionPolicy::Enforce).unwrap();
        assert!((h[0] - h1).abs() < 1e-15);
    }

    #[test]
    fn admissibility() {
        let two = BlackScholesModel::new(vec![0.08, 0.04], vec![0.16, 0.2], &crate::market_models::correlation_2x2(0.3)).unwrap();
        assert!(Strategy::move_based().check_admissible(&two).is_err());
        assert!(Strategy::pasted().check_admissible(&two).is_ok());
        assert!(Strategy::Periodic { interval: 0.0 }.check_admissible(&two).is_err());
    }
}
