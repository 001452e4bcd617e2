use std::fmt::Write as _;
use std::sync::Arc;

use rebalancing::asymptotics::{
    band_loss_rate_1d, check_nondegeneracy, constant_rule_cost, constant_rule_from, loss_rate,
    optimal_a, optimal_rule, path_integrals, sample_states, total_cost, CostBreakdown,
    DiscretizationRule, ExpectationGrid, PathIntegrals, TIME_EXPONENT,
};
use rebalancing::evaluation::tables::{
    figure1, figure1_rhos, run_block, run_table, write_figure_csv, write_table_csv, TableBlock,
    TableSettings,
};
use rebalancing::evaluation::path_objectives;
use rebalancing::frictionless::{AssumptionPolicy, MertonState};
use rebalancing::linalg::Matrix;
use rebalancing::market_models::{finite_difference_jacobians, MarketModel};
use rebalancing::simulation::{
    move_based_halfwidth_1d, run_path, HalfWidth, RebalanceTo, SimulationConfig, Strategy,
};
use rebalancing::{Error, Result};

use crate::config::{RunConfig, StrategyKind, StrategySpec};

/// Command-line settings that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub epsilon: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.simulation.seed = s;
        }
        if let Some(n) = self.paths {
            cfg.simulation.n_paths = n;
        }
        if let Some(e) = self.epsilon {
            cfg.simulation.epsilon = e;
        }
    }

    pub fn table_settings(&self) -> TableSettings {
        let mut s = TableSettings::default();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(n) = self.paths {
            s.n_paths = n;
        }
        if let Some(e) = self.epsilon {
            s.epsilon = e;
        }
        s
    }
}

/// CSV text produced by a command, and whether every path completed.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub csv: String,
    pub complete: bool,
}

impl Report {
    fn ok(csv: String) -> Self {
        Self { csv, complete: true }
    }
}

/// `x` with `digits` significant digits.
pub fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

struct Rows(String);

impl Rows {
    fn new(header: &str) -> Self {
        Self(format!("{header}\n"))
    }

    fn push(&mut self, key: impl std::fmt::Display, value: impl std::fmt::Display) {
        writeln!(self.0, "{key},{value}").expect("string write");
    }

    fn check(&mut self, key: impl std::fmt::Display, value: impl std::fmt::Display, pass: Option<bool>) {
        let status = match pass {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "info",
        };
        writeln!(self.0, "{key},{value},{status}").expect("string write");
    }

    fn years(&mut self, key: &str, years: f64) {
        self.push(format!("{key}_years"), significant(years, 4));
        self.push(format!("{key}_months"), significant(12.0 * years, 4));
    }

    fn rate(&mut self, key: &str, rate: f64) {
        self.push(key, rate);
        self.push(format!("{key}_percent"), 100.0 * rate);
    }
}

struct Setup {
    model: Arc<dyn MarketModel>,
    sim: SimulationConfig,
    grid: ExpectationGrid,
    y0: Vec<f64>,
}

impl Setup {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let model = cfg.build_model()?;
        let sim = cfg.simulation.to_config();
        sim.validate()?;
        if cfg.simulation.expectation_paths == 0 {
            return Err(Error::Input("simulation.expectation_paths must be at least 1".into()));
        }
        let grid = ExpectationGrid::new(
            sim.horizon,
            sim.dt,
            cfg.simulation.expectation_paths,
            sim.seed,
            sim.y0.clone(),
        );
        let y0 = sim.initial_state(model.as_ref());
        Ok(Self { model, sim, grid, y0 })
    }

    fn policy(&self) -> AssumptionPolicy {
        self.sim.policy()
    }

    fn integrals(&self, rule: Option<&DiscretizationRule>) -> Result<PathIntegrals> {
        path_integrals(self.model.as_ref(), self.sim.gamma, &self.grid, rule, self.policy())
    }
}

/// Optimal rule at the initial state: `A*`, waiting time and cost integrands.
pub fn frequency(cfg: &RunConfig) -> Result<Report> {
    let s = Setup::new(cfg)?;
    let state = MertonState::compute(s.model.as_ref(), &s.y0, s.sim.gamma)?;
    let a = optimal_a(&state)?;
    state.assumption.enforce(s.policy())?;
    let eps = s.sim.epsilon;
    let scale = eps.powf(TIME_EXPONENT);
    let cost = CostBreakdown::at(&state, a);
    let mut rows = Rows::new("quantity,value");
    rows.push("a_star_years", significant(a, 4));
    rows.years("waiting_time", scale * a);
    rows.push("tac_rate", cost.tac_rate);
    rows.push("de_rate", cost.de_rate);
    rows.push("tc_rate", cost.tc_rate);
    rows.rate("loss_rate", scale * cost.tc_rate);
    if !s.model.is_constant() {
        let ints = s.integrals(None)?;
        let constant = constant_rule_from(&ints)?;
        let ac = constant.constant_value().expect("constant rule");
        rows.push("constant_a_star_years", significant(ac, 4));
        rows.years("constant_waiting_time", scale * ac);
        rows.rate(
            "constant_loss_rate",
            loss_rate(constant_rule_cost(&ints), eps, s.sim.horizon),
        );
    }
    Ok(Report::ok(rows.0))
}

/// Leading-order total cost of the optimal and the optimal constant rule.
pub fn tc(cfg: &RunConfig) -> Result<Report> {
    let s = Setup::new(cfg)?;
    let gamma = s.sim.gamma;
    let rule = optimal_rule(s.model.clone(), gamma, s.policy(), Some(&s.y0))?;
    let ints = s.integrals(Some(&rule))?;
    let tac = ints.tac_constant;
    let de = 0.5 * gamma * ints.de_constant;
    let constant = constant_rule_cost(&ints);
    let (eps, t) = (s.sim.epsilon, s.sim.horizon);
    let mut rows = Rows::new("quantity,value");
    rows.push("tc_optimal", ints.optimal_cost);
    rows.push("tc_optimal_from_rule", tac + de);
    rows.push("tc_constant", constant);
    rows.rate("loss_rate_optimal", loss_rate(ints.optimal_cost, eps, t));
    rows.rate("loss_rate_constant", loss_rate(constant, eps, t));
    rows.push("tac_share", tac / (tac + de));
    rows.push("tac_to_de_ratio", tac / de);
    Ok(Report::ok(rows.0))
}

fn default_menu(model: &dyn MarketModel) -> Vec<StrategySpec> {
    let mut kinds = vec![if model.dims().assets == 1 {
        StrategyKind::MoveBased
    } else {
        StrategyKind::PastedMoveBased
    }];
    kinds.push(StrategyKind::TimeBased);
    if !model.is_constant() {
        kinds.push(StrategyKind::ConstantFrequency);
    }
    kinds.push(StrategyKind::BuyAndHold);
    kinds.into_iter().map(StrategySpec::of).collect()
}

fn build_strategy(
    spec: &StrategySpec,
    s: &Setup,
    ints: &PathIntegrals,
) -> Result<(Strategy, Option<f64>)> {
    let gamma = s.sim.gamma;
    let (eps, t) = (s.sim.epsilon, s.sim.horizon);
    let fric = ints.frictionless / t;
    let band = || -> Result<(HalfWidth, RebalanceTo)> {
        if spec.interval.is_some() {
            return Err(Error::Input("strategies.interval applies to periodic only".into()));
        }
        let h = spec.halfwidth.map_or(HalfWidth::Optimal, HalfWidth::Fixed);
        Ok((h, spec.rebalance_to.unwrap_or_default()))
    };
    let plain = || -> Result<()> {
        if spec.interval.is_some() || spec.halfwidth.is_some() || spec.rebalance_to.is_some() {
            return Err(Error::Input(format!(
                "strategy {:?} takes no interval, halfwidth or rebalance_to",
                spec.kind
            )));
        }
        Ok(())
    };
    Ok(match spec.kind {
        StrategyKind::TimeBased => {
            plain()?;
            let rule = optimal_rule(s.model.clone(), gamma, s.policy(), Some(&s.y0))?;
            (Strategy::TimeBased(rule), Some(fric - loss_rate(ints.optimal_cost, eps, t)))
        }
        StrategyKind::ConstantFrequency => {
            plain()?;
            let rule = constant_rule_from(ints)?;
            (Strategy::TimeBased(rule), Some(fric - loss_rate(constant_rule_cost(ints), eps, t)))
        }
        StrategyKind::Periodic => {
            if spec.halfwidth.is_some() || spec.rebalance_to.is_some() {
                return Err(Error::Input("periodic strategies take only an interval".into()));
            }
            let interval = spec
                .interval
                .ok_or_else(|| Error::Input("periodic strategy needs strategies.interval".into()))?;
            let prediction = if eps > 0.0 && interval > 0.0 {
                let rule = DiscretizationRule::constant(interval / eps.powf(TIME_EXPONENT))?;
                let cost = total_cost(s.model.as_ref(), gamma, &rule, &s.grid, s.policy())?;
                Some(fric - loss_rate(cost, eps, t))
            } else {
                None
            };
            (Strategy::Periodic { interval }, prediction)
        }
        StrategyKind::BuyAndHold => {
            plain()?;
            (Strategy::BuyAndHold, None)
        }
        StrategyKind::MoveBased => {
            let (halfwidth, rebalance_to) = band()?;
            let prediction = if s.model.is_constant() && s.model.dims().assets == 1 {
                let state = MertonState::compute(s.model.as_ref(), &[], gamma)?;
                let delta = match halfwidth {
                    HalfWidth::Fixed(h) => h,
                    HalfWidth::Optimal => {
                        move_based_halfwidth_1d(s.model.as_ref(), &[], gamma, eps, s.policy())?
                    }
                };
                let w = state.w_star[0];
                let s2 = state.cov[(0, 0)];
                let b = w * (1.0 - w) * s2.sqrt();
                Some(fric - band_loss_rate_1d(b, s2, gamma, eps, delta, rebalance_to))
            } else {
                None
            };
            (Strategy::MoveBased1D { halfwidth, rebalance_to }, prediction)
        }
        StrategyKind::PastedMoveBased => {
            let (halfwidth, rebalance_to) = band()?;
            (Strategy::PastedMoveBased { halfwidth, rebalance_to }, None)
        }
    })
}

/// Simulated objectives of the configured strategies, with the per-path
/// outcomes as a second CSV when requested.
pub fn simulate(cfg: &RunConfig, want_paths: bool) -> Result<(Report, Option<String>)> {
    let s = Setup::new(cfg)?;
    let ints = s.integrals(None)?;
    let specs = if cfg.strategies.is_empty() {
        default_menu(s.model.as_ref())
    } else {
        cfg.strategies.clone()
    };
    let strategies = specs
        .iter()
        .map(|spec| build_strategy(spec, &s, &ints))
        .collect::<Result<Vec<_>>>()?;
    let fric = ints.frictionless / s.sim.horizon;
    let block = run_block(s.model.as_ref(), s.sim.clone(), None, fric, strategies)?;
    let report = block_report(std::slice::from_ref(&block))?;
    let paths = want_paths.then(|| per_path_csv(&block));
    Ok((report, paths))
}

fn block_report(blocks: &[TableBlock]) -> Result<Report> {
    let mut buf = Vec::new();
    write_table_csv(blocks, &mut buf)?;
    let complete = blocks.iter().flat_map(|b| &b.rows).all(|r| r.report.failures == 0);
    Ok(Report {
        csv: String::from_utf8(buf).expect("utf-8 csv"),
        complete,
    })
}

fn per_path_csv(block: &TableBlock) -> String {
    let mut out = String::from(
        "path,strategy,objective,sum_returns,sum_sq_returns,tac,de,trades,terminal_wealth,failed\n",
    );
    for (row, outcomes) in block.rows[1..].iter().zip(&block.outcomes) {
        let objectives = path_objectives(outcomes, &block.config);
        let mut ok = objectives.iter();
        for (i, o) in outcomes.iter().enumerate() {
            let objective = if o.failed {
                String::new()
            } else {
                ok.next().map(ToString::to_string).unwrap_or_default()
            };
            writeln!(
                out,
                "{i},{},{objective},{},{},{},{},{},{},{}",
                row.report.strategy,
                o.sum_returns,
                o.sum_sq_returns,
                o.tac,
                o.de,
                o.trades,
                o.terminal_wealth,
                o.failed
            )
            .expect("string write");
        }
    }
    out
}

/// Trade-by-trade ledger of every path, one row per trade and asset.
pub fn ledger(cfg: &RunConfig) -> Result<String> {
    let s = Setup::new(cfg)?;
    let ints = s.integrals(None)?;
    let specs = if cfg.strategies.is_empty() {
        default_menu(s.model.as_ref())
    } else {
        cfg.strategies.clone()
    };
    let strategies = specs
        .iter()
        .map(|spec| build_strategy(spec, &s, &ints).map(|(st, _)| st))
        .collect::<Result<Vec<_>>>()?;
    for st in &strategies {
        st.check_admissible(s.model.as_ref())?;
    }
    let mut out = String::from(
        "path,strategy,step,time,asset,pre_weight,delta_l,post_weight,target,cost_fraction,wealth_before,wealth_after\n",
    );
    for p in 0..s.sim.n_paths as u64 {
        let res = run_path(s.model.as_ref(), &s.sim, &strategies, p, true)?;
        let ledgers = res.ledgers.expect("ledgers requested");
        for (st, trades) in strategies.iter().zip(&ledgers) {
            for tr in trades {
                for i in 0..tr.pre_weights.len() {
                    writeln!(
                        out,
                        "{p},{},{},{},{i},{},{},{},{},{},{},{}",
                        st.label(),
                        tr.step,
                        tr.step as f64 * s.sim.dt,
                        tr.pre_weights[i],
                        tr.delta_l[i],
                        tr.post_weights[i],
                        tr.target[i],
                        tr.cost_fraction,
                        tr.wealth_before,
                        tr.wealth_after
                    )
                    .expect("string write");
                }
            }
        }
    }
    Ok(out)
}

pub fn table(id: u8, overrides: &Overrides) -> Result<Report> {
    let blocks = run_table(id, &overrides.table_settings())?;
    block_report(&blocks)
}

pub fn figure(id: u8, overrides: &Overrides) -> Result<Report> {
    if id != 1 {
        return Err(Error::Input(format!("unknown figure {id}; only figure 1 is available")));
    }
    let points = figure1(&overrides.table_settings(), &figure1_rhos())?;
    let mut buf = Vec::new();
    write_figure_csv(&points, &mut buf)?;
    Ok(Report::ok(String::from_utf8(buf).expect("utf-8 csv")))
}

fn identity_residual(cov: &Matrix, inv: &Matrix) -> f64 {
    cov.matmul(inv).max_abs_diff(&Matrix::identity(cov.rows()))
}

/// Diagnostics at the initial state and along sampled state paths.
pub fn validate(cfg: &RunConfig) -> Result<Report> {
    let s = Setup::new(cfg)?;
    let model = s.model.as_ref();
    let gamma = s.sim.gamma;
    let mut rows = Rows::new("check,value,status");
    rows.check("model", model.name(), None);
    let state = MertonState::compute(model, &s.y0, gamma)?;
    let inv = identity_residual(&state.cov, &state.cov_inv);
    rows.check("covariance_inverse_residual", inv, Some(inv < 1e-10));
    let res = state.merton_residual();
    rows.check("merton_residual", res, Some(res < 1e-10));
    for (i, w) in state.w_star.iter().enumerate() {
        rows.check(format!("w_star[{i}]"), w, Some((0.0..1.0).contains(w)));
    }
    let total: f64 = state.w_star.iter().sum();
    rows.check("w_star_total", total, Some(total > 0.0 && total <= 1.0));
    rows.check(
        "long_only_assumption",
        state.assumption.violations.len(),
        Some(state.assumption.holds()),
    );
    rows.check("frictionless_rate", state.frictionless_rate, None);
    for (name, m) in [("sigma_tilde", &state.sigma_tilde), ("beta", &state.beta)] {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                rows.check(format!("{name}[{i}][{j}]"), m[(i, j)], None);
            }
        }
    }
    let norm = state.beta_l21();
    rows.check("beta_l21", norm, Some(norm > 0.0));
    match optimal_a(&state) {
        Ok(a) => rows.check("a_star_years", significant(a, 4), Some(true)),
        Err(_) => rows.check("a_star_years", "degenerate", Some(false)),
    }

    let grid = ExpectationGrid::new(s.sim.horizon, s.sim.dt, s.grid.n_paths.min(20), s.sim.seed, s.sim.y0.clone());
    let samples = sample_states(model, &grid, 50)?;
    if model.dims().state > 0 {
        let mut worst = 0.0f64;
        let mut analytic = false;
        for y in samples.iter().step_by(10) {
            if let Some(jac) = model.analytic_jacobians(y) {
                analytic = true;
                worst = worst.max(jac.max_rel_error(&finite_difference_jacobians(model, y)?));
            }
        }
        if analytic {
            rows.check("jacobian_fd_max_rel_error", worst, Some(worst < 1e-5));
        }
    }
    let nd = check_nondegeneracy(model, gamma, &samples)?;
    rows.check("nondegeneracy_samples", nd.n_samples, None);
    rows.check("nondegeneracy_min_beta_l21", nd.min_beta_l21, Some(nd.passed));
    if let Some(b) = nd.min_analytic_bound {
        rows.check("nondegeneracy_min_bound", b, Some(nd.bound_violations == 0));
    }
    if let Some(a) = nd.min_a_star {
        rows.check("min_a_star_years", significant(a, 4), None);
    }
    Ok(Report::ok(rows.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(significant(2.22699, 4), "2.227");
        assert_eq!(significant(26.7239, 4), "26.72");
        assert_eq!(significant(0.0123456, 4), "0.01235");
        assert_eq!(significant(1234.4, 4), "1234");
    }
}
