//! Aggregation of path outcomes into objective estimates and diagnostics.

pub mod tables;

use serde::Serialize;

use crate::asymptotics::{path_integrals, DiscretizationRule, ExpectationGrid};
use crate::error::{Error, Result};
use crate::linalg::pairwise_sum;
use crate::market_models::MarketModel;
use crate::simulation::{run_strategy, SimulationConfig, Strategy, StrategyOutcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyReport {
    pub strategy: String,
    /// Annualized objective estimate.
    pub f_hat: f64,
    pub stderr: f64,
    /// `E[TAC]/T`.
    pub mean_tac: f64,
    /// `E[DE]/T`.
    pub mean_de: f64,
    pub mean_trades: f64,
    /// Sample mean of the annualized frictionless path integral.
    pub frictionless_rate: f64,
    pub implied_loss: f64,
    pub n_paths: usize,
    pub failures: usize,
}

fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Mean and standard error of the mean; the error is zero for one sample.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let m = mean(xs);
    if n < 2 {
        return (m, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

fn admitted(outcomes: &[StrategyOutcome]) -> Vec<&StrategyOutcome> {
    outcomes.iter().filter(|o| !o.failed).collect()
}

/// Per-path annualized objective values of the admitted paths.
pub fn path_objectives(outcomes: &[StrategyOutcome], config: &SimulationConfig) -> Vec<f64> {
    admitted(outcomes)
        .iter()
        .map(|o| o.objective(config.gamma, config.horizon, config.control_variate))
        .collect()
}

pub fn estimate_objective(
    strategy: &str,
    outcomes: &[StrategyOutcome],
    config: &SimulationConfig,
) -> Result<StrategyReport> {
    if outcomes.is_empty() {
        return Err(Error::Parameter("no path outcomes to aggregate".into()));
    }
    let ok = admitted(outcomes);
    if ok.is_empty() {
        return Err(Error::Simulation(format!("every path of {strategy} failed")));
    }
    let t = config.horizon;
    let (f_hat, stderr) = mean_and_stderr(&path_objectives(outcomes, config));
    let field = |f: fn(&StrategyOutcome) -> f64| mean(&ok.iter().map(|o| f(o)).collect::<Vec<_>>());
    let frictionless_rate = field(|o| o.frictionless) / t;
    Ok(StrategyReport {
        strategy: strategy.to_string(),
        f_hat,
        stderr,
        mean_tac: field(|o| o.tac) / t,
        mean_de: field(|o| o.de) / t,
        mean_trades: field(|o| o.trades as f64),
        frictionless_rate,
        implied_loss: frictionless_rate - f_hat,
        n_paths: outcomes.len(),
        failures: outcomes.len() - ok.len(),
    })
}

/// Mean and standard error of `F(a) − F(b)` over common paths.
pub fn paired_difference(
    a: &[StrategyOutcome],
    b: &[StrategyOutcome],
    config: &SimulationConfig,
) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Parameter(format!(
            "paired comparison needs equal non-empty samples, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| !x.failed && !y.failed)
        .map(|(x, y)| {
            x.objective(config.gamma, config.horizon, config.control_variate)
                - y.objective(config.gamma, config.horizon, config.control_variate)
        })
        .collect();
    if diffs.is_empty() {
        return Err(Error::Simulation("no common admitted paths".into()));
    }
    Ok(mean_and_stderr(&diffs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionResidual {
    /// `frictionless − F̂`.
    pub loss: f64,
    /// `(E[TAC] + γ/2·E[DE])/T` from the same paths.
    pub leading: f64,
    pub residual: f64,
    /// `|residual| / leading`.
    pub relative: f64,
}

/// Compares the realized loss with the TAC + DE decomposition on the same paths.
pub fn decomposition_check(report: &StrategyReport, gamma: f64) -> DecompositionResidual {
    let leading = report.mean_tac + 0.5 * gamma * report.mean_de;
    let residual = report.implied_loss - leading;
    DecompositionResidual {
        loss: report.implied_loss,
        leading,
        residual,
        relative: if leading > 0.0 {
            residual.abs() / leading
        } else {
            f64::INFINITY
        },
    }
}

/// [`decomposition_check`] with the loss measured against `baseline` on the
/// same paths, typically continuous rebalancing on the simulation grid at
/// zero cost. This removes the time-discretization bias of the objective.
pub fn decomposition_against(
    report: &StrategyReport,
    baseline: &StrategyReport,
    gamma: f64,
) -> DecompositionResidual {
    let paired = StrategyReport {
        implied_loss: baseline.f_hat - report.f_hat,
        ..report.clone()
    };
    decomposition_check(&paired, gamma)
}

/// Leading-order annualized loss `(ε^{1−α/2}·C_TAC + (γ/2)·ε^α·C_DE)/T` of a rule.
pub fn predicted_loss(
    model: &dyn MarketModel,
    gamma: f64,
    rule: &DiscretizationRule,
    config: &SimulationConfig,
    grid: &ExpectationGrid,
) -> Result<f64> {
    let ints = path_integrals(model, gamma, grid, Some(rule), config.policy())?;
    let alpha = rule.exponent();
    let eps = config.epsilon;
    Ok((eps.powf(1.0 - alpha / 2.0) * ints.tac_constant
        + 0.5 * gamma * eps.powf(alpha) * ints.de_constant)
        / config.horizon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionPoint {
    pub alpha: f64,
    pub epsilon: f64,
    /// Simulated `E[TAC]` over the horizon.
    pub tac: f64,
    pub de: f64,
    pub tac_scaled: f64,
    pub de_scaled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionFit {
    pub alpha: f64,
    pub tac_slope: f64,
    pub de_slope: f64,
    /// `√(2/π)E∫‖β‖/√A dt`.
    pub tac_constant: f64,
    /// `½E∫tr(βᵀΣβ)A dt`.
    pub de_constant: f64,
    pub points: Vec<ExpansionPoint>,
}

impl ExpansionFit {
    pub fn expected_tac_slope(&self) -> f64 {
        1.0 - self.alpha / 2.0
    }

    pub fn expected_de_slope(&self) -> f64 {
        self.alpha
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Parameter("slope needs at least two paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Numerical("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// Simulated TAC and DE against their small-cost limits for waiting times `ε^α·A`.
pub fn expansion_check(
    model: &dyn MarketModel,
    gamma: f64,
    config: &SimulationConfig,
    rule: &DiscretizationRule,
    alphas: &[f64],
    epsilons: &[f64],
) -> Result<Vec<ExpansionFit>> {
    if epsilons.len() < 2 {
        return Err(Error::Parameter("expansion check needs at least two ε values".into()));
    }
    let grid = ExpectationGrid::from(config);
    let ints = path_integrals(model, gamma, &grid, Some(rule), config.policy())?;
    let mut fits = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::Parameter(format!("α must lie in (0, 2), got {alpha}")));
        }
        let scaled_rule = rule.with_exponent(alpha);
        let mut points = Vec::with_capacity(epsilons.len());
        for &eps in epsilons {
            let cfg = SimulationConfig {
                epsilon: eps,
                gamma,
                ..config.clone()
            };
            let out = run_strategy(model, &cfg, &Strategy::TimeBased(scaled_rule.clone()))?;
            let ok = admitted(&out);
            let tac = mean(&ok.iter().map(|o| o.tac).collect::<Vec<_>>());
            let de = mean(&ok.iter().map(|o| o.de).collect::<Vec<_>>());
            points.push(ExpansionPoint {
                alpha,
                epsilon: eps,
                tac,
                de,
                tac_scaled: tac / eps.powf(1.0 - alpha / 2.0),
                de_scaled: de / eps.powf(alpha),
            });
        }
        let eps: Vec<f64> = points.iter().map(|p| p.epsilon).collect();
        let tac: Vec<f64> = points.iter().map(|p| p.tac).collect();
        let de: Vec<f64> = points.iter().map(|p| p.de).collect();
        fits.push(ExpansionFit {
            alpha,
            tac_slope: log_log_slope(&eps, &tac)?,
            de_slope: log_log_slope(&eps, &de)?,
            tac_constant: ints.tac_constant,
            de_constant: ints.de_constant,
            points,
        });
    }
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(sum_returns: f64) -> StrategyOutcome {
        StrategyOutcome {
            sum_returns,
            frictionless: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        let cfg = SimulationConfig::desk(1, 0);
        assert!(matches!(estimate_objective("x", &[], &cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn objective_mean_and_bookkeeping() {
        let mut cfg = SimulationConfig::desk(3, 0);
        cfg.control_variate = false;
        let outs = [outcome(0.2), outcome(0.4), outcome(0.6)];
        let r = estimate_objective("x", &outs, &cfg).unwrap();
        assert!((r.f_hat - 0.4 / 20.0).abs() < 1e-15);
        assert!((r.stderr - 0.2 / 20.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.f_hat + r.implied_loss, r.frictionless_rate);
    }

    #[test]
    fn failed_paths_are_excluded_and_counted() {
        let cfg = SimulationConfig::desk(2, 0);
        let mut bad = outcome(100.0);
        bad.failed = true;
        let r = estimate_objective("x", &[outcome(0.2), bad], &cfg).unwrap();
        assert_eq!(r.failures, 1);
        assert_eq!(r.stderr, 0.0);
        assert!((r.f_hat - 0.01).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.02, 0.01, 0.005, 0.0025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(2.0 / 3.0)).collect();
        assert!((log_log_slope(&x, &y).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }
}
