use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frictionless::AssumptionPolicy;
use crate::market_models::MarketModel;

/// Grid, sample size, costs and preferences for a Monte Carlo run.
///
/// Initial wealth is normalized to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Horizon `T` in years.
    pub horizon: f64,
    /// Grid step in years.
    pub dt: f64,
    pub n_paths: usize,
    /// Proportional transaction cost.
    pub epsilon: f64,
    pub gamma: f64,
    /// Initial state; the model default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    /// Subtract the zero-mean martingale `Σ w_{t}ᵀσ ΔB` from each path's
    /// return sum. Leaves the expectation unchanged.
    #[serde(default = "default_true")]
    pub control_variate: bool,
    /// Accept Merton weights outside the long-only simplex.
    #[serde(default)]
    pub allow_assumption_violation: bool,
}

fn default_true() -> bool {
    true
}

impl SimulationConfig {
    /// The desk-scale grid used throughout: `T = 20`, `dt = 1/250`, `γ = 5`, `ε = 1%`.
    pub fn desk(n_paths: usize, seed: u64) -> Self {
        Self {
            horizon: 20.0,
            dt: 1.0 / 250.0,
            n_paths,
            epsilon: 0.01,
            gamma: 5.0,
            y0: None,
            seed,
            control_variate: true,
            allow_assumption_violation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Parameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::Parameter(format!(
                "horizon {} is not an integer multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        if !(0.0..0.5).contains(&self.epsilon) {
            return Err(Error::Parameter(format!(
                "transaction cost must lie in [0, 0.5), got {}",
                self.epsilon
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::Parameter("n_paths must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Parameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn initial_state(&self, model: &dyn MarketModel) -> Vec<f64> {
        self.y0.clone().unwrap_or_else(|| model.default_state())
    }

    pub fn policy(&self) -> AssumptionPolicy {
        if self.allow_assumption_violation {
            AssumptionPolicy::Allow
        } else {
            AssumptionPolicy::Enforce
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_grid_is_valid() {
        let c = SimulationConfig::desk(10, 1);
        c.validate().unwrap();
        assert_eq!(c.n_steps(), 5000);
    }

    #[test]
    fn rejects_non_integral_grid_and_bad_cost() {
        let mut c = SimulationConfig::desk(10, 1);
        c.dt = 0.003;
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::desk(10, 1);
        c.epsilon = 0.5;
        assert!(c.validate().is_err());
        let mut c = SimulationConfig::desk(0, 1);
        c.epsilon = 0.0;
        assert!(c.validate().is_err());
    }
}
