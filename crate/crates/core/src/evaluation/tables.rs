//! Reproduction runs for the benchmark tables and the correlation figure.

use std::io::Write;
use std::sync::Arc;

use crate::asymptotics::{
    band_loss_rate_1d, bs1d_closed_forms, constant_rule_from, constant_rule_cost, loss_rate,
    optimal_a, optimal_rule, optimal_total_cost, path_integrals, ExpectationGrid, TIME_EXPONENT,
};
use crate::error::{Error, Result};
use crate::frictionless::{AssumptionPolicy, MertonState};
use crate::market_models::{
    correlation_2x2, BlackScholesModel, KimOmbergParams, MarketModel, TruncatedKimOmbergModel,
};
use crate::simulation::{
    pasted_halfwidths, run_strategies, RebalanceTo, SimulationConfig, Strategy, StrategyOutcome,
};

use super::{estimate_objective, mean_and_stderr, StrategyReport};

pub const CSV_HEADER: [&str; 7] = [
    "strategy",
    "F_hat",
    "stderr",
    "mean_tac",
    "mean_de",
    "mean_trades",
    "asymptotic_prediction",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TableSettings {
    pub n_paths: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Paths for state-path expectations in stochastic-opportunity models.
    pub expectation_paths: usize,
    /// Correlations for the bivariate tables.
    pub rhos: Vec<f64>,
    pub control_variate: bool,
}

impl Default for TableSettings {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 1,
            epsilon: 0.01,
            gamma: 5.0,
            horizon: 20.0,
            dt: 1.0 / 250.0,
            expectation_paths: 1_000,
            rhos: vec![0.3, 0.6, 0.9],
            control_variate: true,
        }
    }
}

impl TableSettings {
    pub fn simulation_config(&self, allow_assumption_violation: bool) -> SimulationConfig {
        SimulationConfig {
            horizon: self.horizon,
            dt: self.dt,
            n_paths: self.n_paths,
            epsilon: self.epsilon,
            gamma: self.gamma,
            y0: None,
            seed: self.seed,
            control_variate: self.control_variate,
            allow_assumption_violation,
        }
    }

    fn expectation_grid(&self) -> ExpectationGrid {
        ExpectationGrid::new(self.horizon, self.dt, self.expectation_paths, self.seed, None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub report: StrategyReport,
    pub prediction: Option<f64>,
}

/// Strategy outcomes of one table block, kept for paired comparisons.
#[derive(Debug, Clone)]
pub struct TableBlock {
    pub rho: Option<f64>,
    pub config: SimulationConfig,
    pub rows: Vec<TableRow>,
    /// Outcomes per simulated strategy, in the order of `rows[1..]`.
    pub outcomes: Vec<Vec<StrategyOutcome>>,
}

impl TableBlock {
    /// Outcomes of the strategy whose label starts with `name`.
    pub fn outcomes_of(&self, name: &str) -> Option<&[StrategyOutcome]> {
        self.rows[1..]
            .iter()
            .position(|r| r.report.strategy == name)
            .map(|i| &self.outcomes[i][..])
    }

    pub fn row(&self, name: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.report.strategy == name)
    }
}

fn frictionless_report(outcomes: &[StrategyOutcome], horizon: f64) -> StrategyReport {
    let per_path: Vec<f64> = outcomes.iter().map(|o| o.frictionless / horizon).collect();
    let (f, se) = mean_and_stderr(&per_path);
    StrategyReport {
        strategy: "frictionless".into(),
        f_hat: f,
        stderr: se,
        mean_tac: 0.0,
        mean_de: 0.0,
        mean_trades: 0.0,
        frictionless_rate: f,
        implied_loss: 0.0,
        n_paths: outcomes.len(),
        failures: 0,
    }
}

/// Simulates `strategies` on common paths and reports them below a frictionless row.
///
/// Each strategy carries an optional asymptotic prediction for the CSV.
pub fn run_block(
    model: &dyn MarketModel,
    config: SimulationConfig,
    rho: Option<f64>,
    frictionless_prediction: f64,
    strategies: Vec<(Strategy, Option<f64>)>,
) -> Result<TableBlock> {
    let (strats, predictions): (Vec<_>, Vec<_>) = strategies.into_iter().unzip();
    let out = run_strategies(model, &config, &strats)?;
    let suffix = rho.map(|r| format!("[rho={r}]")).unwrap_or_default();
    let mut rows = vec![TableRow {
        label: format!("frictionless{suffix}"),
        report: frictionless_report(&out.outcomes[0], config.horizon),
        prediction: Some(frictionless_prediction),
    }];
    for ((label, outcomes), prediction) in out.labels.iter().zip(&out.outcomes).zip(predictions) {
        rows.push(TableRow {
            label: format!("{label}{suffix}"),
            report: estimate_objective(label, outcomes, &config)?,
            prediction,
        });
    }
    Ok(TableBlock {
        rho,
        config,
        rows,
        outcomes: out.outcomes,
    })
}

/// Single-asset Black–Scholes benchmark.
pub fn table1(settings: &TableSettings) -> Result<Vec<TableBlock>> {
    let (mu, sigma) = (0.08, 0.16);
    let model: Arc<dyn MarketModel> = Arc::new(BlackScholesModel::univariate(mu, sigma)?);
    let cf = bs1d_closed_forms(mu, sigma, settings.gamma, settings.epsilon)?;
    let config = settings.simulation_config(false);
    let state = MertonState::compute(model.as_ref(), &[], settings.gamma)?;
    let fric = state.frictionless_rate;
    let b = cf.w_star * (1.0 - cf.w_star) * sigma;
    let delta = pasted_halfwidths(&state, settings.epsilon)[0];
    let move_loss = band_loss_rate_1d(
        b,
        sigma * sigma,
        settings.gamma,
        settings.epsilon,
        delta,
        RebalanceTo::Boundary,
    );
    let rule = optimal_rule(model.clone(), settings.gamma, AssumptionPolicy::Enforce, None)?;
    let block = run_block(
        model.as_ref(),
        config,
        None,
        fric,
        vec![
            (Strategy::move_based(), Some(fric - move_loss)),
            (Strategy::TimeBased(rule), Some(fric - cf.time_based_loss_rate)),
            (Strategy::BuyAndHold, None),
        ],
    )?;
    Ok(vec![block])
}

/// Single-asset truncated Kim–Omberg benchmark.
pub fn table2(settings: &TableSettings) -> Result<Vec<TableBlock>> {
    let model: Arc<dyn MarketModel> =
        Arc::new(TruncatedKimOmbergModel::new(KimOmbergParams::table2())?);
    let policy = AssumptionPolicy::Allow;
    let ints = path_integrals(model.as_ref(), settings.gamma, &settings.expectation_grid(), None, policy)?;
    let t = settings.horizon;
    let fric = ints.frictionless / t;
    let rule = optimal_rule(model.clone(), settings.gamma, policy, None)?;
    let constant = constant_rule_from(&ints)?;
    let scale = settings.epsilon.powf(TIME_EXPONENT) / t;
    let block = run_block(
        model.as_ref(),
        settings.simulation_config(true),
        None,
        fric,
        vec![
            (Strategy::move_based(), None),
            (Strategy::TimeBased(rule), Some(fric - scale * ints.optimal_cost)),
            (Strategy::TimeBased(constant), Some(fric - scale * constant_rule_cost(&ints))),
            (Strategy::BuyAndHold, None),
        ],
    )?;
    Ok(vec![block])
}

pub fn bivariate_black_scholes(rho: f64) -> Result<BlackScholesModel> {
    BlackScholesModel::new(vec![0.08, 0.08], vec![0.16, 0.16], &correlation_2x2(rho))
}

/// Two-asset Black–Scholes benchmark over `settings.rhos`.
pub fn table3(settings: &TableSettings) -> Result<Vec<TableBlock>> {
    let mut blocks = Vec::new();
    for &rho in &settings.rhos {
        let model: Arc<dyn MarketModel> = Arc::new(bivariate_black_scholes(rho)?);
        let state = MertonState::compute(model.as_ref(), &[], settings.gamma)?;
        let fric = state.frictionless_rate;
        let grid = settings.expectation_grid();
        let tc = optimal_total_cost(model.as_ref(), settings.gamma, &grid, AssumptionPolicy::Allow)?;
        let rule = optimal_rule(model.clone(), settings.gamma, AssumptionPolicy::Allow, None)?;
        blocks.push(run_block(
            model.as_ref(),
            settings.simulation_config(true),
            Some(rho),
            fric,
            vec![
                (Strategy::pasted(), None),
                (
                    Strategy::TimeBased(rule),
                    Some(fric - loss_rate(tc, settings.epsilon, settings.horizon)),
                ),
                (Strategy::BuyAndHold, None),
            ],
        )?);
    }
    Ok(blocks)
}

/// Two-asset truncated Kim–Omberg benchmark over `settings.rhos`.
pub fn table4(settings: &TableSettings) -> Result<Vec<TableBlock>> {
    let policy = AssumptionPolicy::Allow;
    let mut blocks = Vec::new();
    for &rho in &settings.rhos {
        let model: Arc<dyn MarketModel> =
            Arc::new(TruncatedKimOmbergModel::new(KimOmbergParams::table4(rho))?);
        let ints =
            path_integrals(model.as_ref(), settings.gamma, &settings.expectation_grid(), None, policy)?;
        let t = settings.horizon;
        let fric = ints.frictionless / t;
        let rule = optimal_rule(model.clone(), settings.gamma, policy, None)?;
        blocks.push(run_block(
            model.as_ref(),
            settings.simulation_config(true),
            Some(rho),
            fric,
            vec![
                (Strategy::pasted(), None),
                (
                    Strategy::TimeBased(rule),
                    Some(fric - loss_rate(ints.optimal_cost, settings.epsilon, t)),
                ),
                (Strategy::BuyAndHold, None),
            ],
        )?);
    }
    Ok(blocks)
}

pub fn run_table(id: u8, settings: &TableSettings) -> Result<Vec<TableBlock>> {
    match id {
        1 => table1(settings),
        2 => table2(settings),
        3 => table3(settings),
        4 => table4(settings),
        _ => Err(Error::Input(format!("unknown table {id}; expected 1, 2, 3 or 4"))),
    }
}

fn io_error(e: impl std::fmt::Display) -> Error {
    Error::Input(format!("cannot write output: {e}"))
}

pub fn write_table_csv<W: Write>(blocks: &[TableBlock], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER).map_err(io_error)?;
    for row in blocks.iter().flat_map(|b| &b.rows) {
        let r = &row.report;
        w.write_record([
            row.label.clone(),
            r.f_hat.to_string(),
            r.stderr.to_string(),
            r.mean_tac.to_string(),
            r.mean_de.to_string(),
            r.mean_trades.to_string(),
            row.prediction.map(|p| p.to_string()).unwrap_or_default(),
        ])
        .map_err(io_error)?;
    }
    w.flush().map_err(io_error)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigurePoint {
    pub rho: f64,
    /// Optimal waiting time `ε^{2/3}A*` in years.
    pub a_star_years: f64,
    pub f_hat: f64,
    pub stderr: f64,
    pub frictionless_rate: f64,
    pub outcomes: Vec<StrategyOutcome>,
}

pub fn figure1_rhos() -> Vec<f64> {
    let mut r: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
    r.extend([0.99, 0.999]);
    r
}

/// Waiting time of the two-asset Black–Scholes market with identical assets.
pub fn bivariate_waiting_time(rho: f64, gamma: f64, epsilon: f64) -> Result<f64> {
    let model = bivariate_black_scholes(rho)?;
    let state = MertonState::compute(&model, &[], gamma)?;
    Ok(epsilon.powf(TIME_EXPONENT) * optimal_a(&state)?)
}

/// Optimal waiting time and simulated time-based objective against correlation.
pub fn figure1(settings: &TableSettings, rhos: &[f64]) -> Result<Vec<FigurePoint>> {
    let mut points = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        let model: Arc<dyn MarketModel> = Arc::new(bivariate_black_scholes(rho)?);
        let rule = optimal_rule(model.clone(), settings.gamma, AssumptionPolicy::Allow, None)?;
        let config = settings.simulation_config(true);
        let out = run_strategies(model.as_ref(), &config, &[Strategy::TimeBased(rule)])?;
        let report = estimate_objective("time_based", &out.outcomes[0], &config)?;
        points.push(FigurePoint {
            rho,
            a_star_years: bivariate_waiting_time(rho, settings.gamma, settings.epsilon)?,
            f_hat: report.f_hat,
            stderr: report.stderr,
            frictionless_rate: report.frictionless_rate,
            outcomes: out.outcomes.into_iter().next().expect("one strategy"),
        });
    }
    Ok(points)
}

pub fn write_figure_csv<W: Write>(points: &[FigurePoint], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["rho", "A_star_years", "F_hat"]).map_err(io_error)?;
    for p in points {
        w.write_record([p.rho.to_string(), p.a_star_years.to_string(), p.f_hat.to_string()])
            .map_err(io_error)?;
    }
    w.flush().map_err(io_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waiting_time_tends_to_univariate_limit() {
        let one = bs1d_closed_forms(0.08, 0.16, 5.0, 0.01).unwrap().waiting_time;
        let two = bivariate_waiting_time(0.999, 5.0, 0.01).unwrap();
        assert!((two - one).abs() / one < 0.01, "{two} vs {one}");
    }

    #[test]
    fn unknown_table_is_input_error() {
        assert!(matches!(run_table(7, &TableSettings::default()), Err(Error::Input(_))));
    }
}
