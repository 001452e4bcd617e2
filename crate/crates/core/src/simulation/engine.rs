//! Discretely rebalanced wealth along simulated paths.
//!
//! All strategies passed to [`run_strategies`] are driven by the same market
//! path, so differences between them carry no sampling noise from the
//! market itself.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::asymptotics::{optimal_a_from, DiscretizationRule};
use crate::frictionless::{AssumptionCheck, CachedMerton, MertonState};
use crate::linalg::{dot, Matrix};
use crate::market_models::{evaluate_coefficients, MarketModel, RawCoefficients};

use super::path::PathStepper;
use super::rebalance::rebalance_solve;
use super::strategy::{halfwidths_into, pasted_halfwidths, HalfWidth, RebalanceTo, Strategy};
use super::SimulationConfig;

/// Per-path accumulators of one strategy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrategyOutcome {
    /// `Σ (V_{k+1}/V_k − 1)` over grid steps and trades.
    pub sum_returns: f64,
    /// Sum of squared relative increments.
    pub sum_sq_returns: f64,
    /// `Σ w_kᵀσ(Y_k)ΔB_k`, a zero-mean martingale correlated with the returns.
    pub control: f64,
    /// Realized `ε·Σ|ΔL|`.
    pub tac: f64,
    /// Trapezoid of `(w* − w)ᵀΣ(w* − w)`.
    pub de: f64,
    pub trades: usize,
    pub terminal_wealth: f64,
    /// Path integral of the frictionless rate.
    pub frictionless: f64,
    pub failed: bool,
}

impl StrategyOutcome {
    /// Per-path objective `(Σr − γ/2·Σr²)/T`, optionally net of the control.
    pub fn objective(&self, gamma: f64, horizon: f64, control_variate: bool) -> f64 {
        let cv = if control_variate { self.control } else { 0.0 };
        (self.sum_returns - cv - 0.5 * gamma * self.sum_sq_returns) / horizon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeRecord {
    /// Grid index of the trade.
    pub step: usize,
    pub pre_weights: Vec<f64>,
    pub delta_l: Vec<f64>,
    pub cost_fraction: f64,
    pub post_weights: Vec<f64>,
    pub target: Vec<f64>,
    pub wealth_before: f64,
    pub wealth_after: f64,
}

/// Outcomes of one path, plus trade ledgers when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub outcomes: Vec<StrategyOutcome>,
    pub ledgers: Option<Vec<Vec<TradeRecord>>>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub labels: Vec<&'static str>,
    /// `outcomes[s][path]`.
    pub outcomes: Vec<Vec<StrategyOutcome>>,
}

impl RunOutput {
    pub fn failures(&self, strategy: usize) -> usize {
        self.outcomes[strategy].iter().filter(|o| o.failed).count()
    }
}

/// Coefficients and Merton target at the current grid point.
struct Local<'a> {
    model: &'a dyn MarketModel,
    gamma: f64,
    y: Vec<f64>,
    raw: RawCoefficients,
    cov: Matrix,
    cov_inv: Matrix,
    w_star: Vec<f64>,
    rate: f64,
    cached: Option<CachedMerton>,
    merton: Option<MertonState>,
    halfwidths: Vec<f64>,
    halfwidths_valid: bool,
}

impl<'a> Local<'a> {
    fn new(model: &'a dyn MarketModel, y: &[f64], gamma: f64) -> Result<Self> {
        let c = evaluate_coefficients(model, y)?;
        let cached = if model.is_constant() {
            None
        } else {
            CachedMerton::new(model, y, gamma)?
        };
        let mut me = Self {
            model,
            gamma,
            y: y.to_vec(),
            raw: RawCoefficients {
                mu: c.mu,
                sigma: c.sigma,
                b: c.b,
                g: c.g,
            },
            cov: c.cov,
            cov_inv: c.cov_inv,
            w_star: Vec::new(),
            rate: 0.0,
            cached,
            merton: None,
            halfwidths: vec![0.0; model.dims().assets],
            halfwidths_valid: false,
        };
        me.refresh_target();
        Ok(me)
    }

    fn refresh_target(&mut self) {
        if let Some(c) = &self.cached {
            self.w_star.clone_from(&c.w_star);
            self.rate = c.frictionless_rate;
            return;
        }
        let m = self.raw.mu.len();
        self.w_star.resize(m, 0.0);
        for i in 0..m {
            self.w_star[i] = dot(self.cov_inv.row(i), &self.raw.mu) / self.gamma;
        }
        self.rate = 0.5 * dot(&self.raw.mu, &self.w_star);
    }

    fn update(&mut self, y: &[f64]) -> Result<()> {
        if self.model.is_constant() {
            return Ok(());
        }
        self.y.copy_from_slice(y);
        if let Some(c) = &mut self.cached {
            c.evaluate(self.model, y)?;
        } else {
            let c = evaluate_coefficients(self.model, y)?;
            self.raw = RawCoefficients {
                mu: c.mu,
                sigma: c.sigma,
                b: c.b,
                g: c.g,
            };
            self.cov = c.cov;
            self.cov_inv = c.cov_inv;
        }
        self.refresh_target();
        self.merton = None;
        self.halfwidths_valid = false;
        Ok(())
    }

    fn raw(&self) -> &RawCoefficients {
        self.cached.as_ref().map_or(&self.raw, CachedMerton::raw)
    }

    fn merton(&mut self) -> Result<&MertonState> {
        if self.merton.is_none() {
            self.merton = Some(MertonState::compute(self.model, &self.y, self.gamma)?);
        }
        Ok(self.merton.as_ref().expect("just set"))
    }

    fn ensure_halfwidths(&mut self, epsilon: f64) -> Result<()> {
        if self.halfwidths_valid {
            return Ok(());
        }
        if let Some(c) = &self.cached {
            halfwidths_into(
                &c.w_star,
                c.sigma(),
                &c.sigma_tilde,
                self.gamma,
                epsilon,
                &mut self.halfwidths,
            );
        } else {
            let h = pasted_halfwidths(self.merton()?, epsilon);
            self.halfwidths = h;
        }
        self.halfwidths_valid = true;
        Ok(())
    }

    /// `A` of a rule at the current state.
    fn rule_a(&mut self, rule: &DiscretizationRule) -> Result<f64> {
        if let Some(a) = rule.constant_value() {
            return Ok(a);
        }
        if let Some(c) = &self.cached {
            rule.enforce_policy(&c.assumption())?;
            return optimal_a_from(c.beta_l21(), c.beta_cov_trace(), self.gamma);
        }
        rule.a_at_state(self.merton()?)
    }

    fn gap_norm(&self, w: &[f64], scratch: &mut [f64]) -> f64 {
        for ((s, a), b) in scratch.iter_mut().zip(&self.w_star).zip(w) {
            *s = a - b;
        }
        self.cov.quad_form(scratch)
    }
}

struct Book {
    pos: Vec<f64>,
    cash: f64,
    wealth: f64,
    next_k: usize,
    f_left: f64,
    out: StrategyOutcome,
    ledger: Option<Vec<TradeRecord>>,
}

impl Book {
    fn weights(&self) -> Vec<f64> {
        self.pos.iter().map(|p| p / self.wealth).collect()
    }
}

fn steps_until(dt: f64, k: usize, waiting: f64) -> usize {
    let target = (k as f64 * dt + waiting) / dt;
    ((target - 1e-9).ceil() as usize).max(k + 1)
}

fn schedule_next(
    strategy: &Strategy,
    local: &mut Local<'_>,
    config: &SimulationConfig,
    k: usize,
) -> Result<usize> {
    match strategy {
        Strategy::TimeBased(rule) => {
            let a = local.rule_a(rule)?;
            let wt = config.epsilon.powf(rule.exponent()) * a;
            if !(wt > 0.0 && wt.is_finite()) {
                return Err(Error::Rule(format!(
                    "waiting time {wt} at y = {:?}, ε = {}",
                    local.y, config.epsilon
                )));
            }
            Ok(steps_until(config.dt, k, wt))
        }
        Strategy::Periodic { interval } => Ok(steps_until(config.dt, k, *interval)),
        _ => Ok(usize::MAX),
    }
}

/// Targets and masks for a trade at the current state, or `None` for no trade.
fn trade_targets(
    strategy: &Strategy,
    book: &Book,
    w: &[f64],
    local: &mut Local<'_>,
    k: usize,
    epsilon: f64,
) -> Result<Option<(Vec<f64>, Vec<bool>)>> {
    let m = w.len();
    match strategy {
        Strategy::BuyAndHold => Ok(None),
        Strategy::TimeBased(_) | Strategy::Periodic { .. } => {
            if k < book.next_k {
                return Ok(None);
            }
            Ok(Some((local.w_star.clone(), vec![true; m])))
        }
        Strategy::MoveBased1D {
            halfwidth,
            rebalance_to,
        }
        | Strategy::PastedMoveBased {
            halfwidth,
            rebalance_to,
        } => {
            let fixed;
            let widths = match halfwidth {
                HalfWidth::Fixed(h) => {
                    fixed = vec![*h; m];
                    &fixed[..]
                }
                HalfWidth::Optimal => {
                    local.ensure_halfwidths(epsilon)?;
                    &local.halfwidths[..]
                }
            };
            let breached = |i: usize| (w[i] - local.w_star[i]).abs() > widths[i];
            if !(0..m).any(breached) {
                return Ok(None);
            }
            let mut mask: Vec<bool> = (0..m).map(breached).collect();
            let mut target = local.w_star.clone();
            if *rebalance_to == RebalanceTo::Boundary {
                for i in 0..m {
                    if mask[i] {
                        target[i] += widths[i] * (w[i] - local.w_star[i]).signum();
                    }
                }
            }
            if matches!(strategy, Strategy::MoveBased1D { .. }) {
                mask.fill(true);
            }
            Ok(Some((target, mask)))
        }
    }
}

fn execute_trade(
    book: &mut Book,
    target: &[f64],
    mask: &[bool],
    epsilon: f64,
    k: usize,
) -> Result<()> {
    let w = book.weights();
    let d: Vec<f64> = (0..w.len())
        .map(|i| if mask[i] { target[i] - w[i] } else { 0.0 })
        .collect();
    let wt: Vec<f64> = (0..w.len())
        .map(|i| if mask[i] { target[i] } else { 0.0 })
        .collect();
    let trade = rebalance_solve(&d, &wt, epsilon)?;
    let before = book.wealth;
    let after = before * (1.0 - trade.cost_fraction);
    for (i, p) in book.pos.iter_mut().enumerate() {
        *p = if mask[i] {
            target[i] * after
        } else {
            before * (w[i] + trade.delta_l[i])
        };
    }
    book.cash = after - book.pos.iter().sum::<f64>();
    book.wealth = after;
    let jump = -trade.cost_fraction;
    book.out.sum_returns += jump;
    book.out.sum_sq_returns += jump * jump;
    book.out.tac += trade.cost_fraction;
    book.out.trades += 1;
    let post_weights = book.weights();
    if let Some(ledger) = &mut book.ledger {
        ledger.push(TradeRecord {
            step: k,
            pre_weights: w,
            delta_l: trade.delta_l,
            cost_fraction: trade.cost_fraction,
            post_weights,
            target: wt,
            wealth_before: before,
            wealth_after: after,
        });
    }
    Ok(())
}

/// Runs every strategy along path `path_index`.
pub fn run_path(
    model: &dyn MarketModel,
    config: &SimulationConfig,
    strategies: &[Strategy],
    path_index: u64,
    record_trades: bool,
) -> Result<PathResult> {
    let dims = model.dims();
    let n = config.n_steps();
    let dt = config.dt;
    let eps = config.epsilon;
    let y0 = config.initial_state(model);
    let mut stepper = PathStepper::new(model, &y0, dt, config.seed, path_index)?;
    let mut local = Local::new(model, &y0, config.gamma)?;
    AssumptionCheck::evaluate(&local.w_star).enforce(config.policy())?;

    let mut books = Vec::with_capacity(strategies.len());
    for s in strategies {
        let pos = local.w_star.clone();
        let cash = 1.0 - pos.iter().sum::<f64>();
        let mut book = Book {
            pos,
            cash,
            wealth: 1.0,
            next_k: usize::MAX,
            f_left: 0.0,
            out: StrategyOutcome::default(),
            ledger: record_trades.then(Vec::new),
        };
        book.next_k = schedule_next(s, &mut local, config, 0)?;
        books.push(book);
    }

    let mut shocks = vec![0.0; dims.drivers];
    let mut log_returns = vec![0.0; dims.assets];
    let mut growth = vec![0.0; dims.assets];
    let mut sdb = vec![0.0; dims.assets];
    let mut scratch = vec![0.0; dims.assets];
    let mut wbuf = vec![0.0; dims.assets];
    let mut frictionless = 0.5 * dt * local.rate;

    for k in 0..n {
        stepper.step(local.raw(), &mut shocks, &mut log_returns)?;
        for i in 0..dims.assets {
            growth[i] = log_returns[i].exp();
            sdb[i] = dot(local.raw().sigma.row(i), &shocks);
        }
        local.update(stepper.state())?;
        let t_weight = if k + 1 == n { 0.5 } else { 1.0 };
        frictionless += t_weight * dt * local.rate;

        for (s, book) in strategies.iter().zip(books.iter_mut()) {
            if book.out.failed {
                continue;
            }
            let mut cv = 0.0;
            for i in 0..dims.assets {
                cv += book.pos[i] * sdb[i];
                book.pos[i] *= growth[i];
            }
            book.out.control += cv / book.wealth;
            let new_wealth = book.cash + book.pos.iter().sum::<f64>();
            if !(new_wealth > 0.0) {
                book.out.failed = true;
                continue;
            }
            let r = new_wealth / book.wealth - 1.0;
            book.out.sum_returns += r;
            book.out.sum_sq_returns += r * r;
            book.wealth = new_wealth;
            for i in 0..dims.assets {
                wbuf[i] = book.pos[i] / new_wealth;
            }
            let f_right = local.gap_norm(&wbuf, &mut scratch);
            book.out.de += 0.5 * dt * (book.f_left + f_right);
            book.f_left = f_right;
            if k + 1 == n {
                continue;
            }
            if let Some((target, mask)) = trade_targets(s, book, &wbuf, &mut local, k + 1, eps)? {
                execute_trade(book, &target, &mask, eps, k + 1)?;
                for i in 0..dims.assets {
                    wbuf[i] = book.pos[i] / book.wealth;
                }
                book.f_left = local.gap_norm(&wbuf, &mut scratch);
                if matches!(s, Strategy::TimeBased(_) | Strategy::Periodic { .. }) {
                    book.next_k = schedule_next(s, &mut local, config, k + 1)?;
                }
            }
        }
    }

    let mut outcomes = Vec::with_capacity(books.len());
    let mut ledgers = record_trades.then(Vec::new);
    for book in books {
        let mut out = book.out;
        out.terminal_wealth = book.wealth;
        out.frictionless = frictionless;
        outcomes.push(out);
        if let (Some(all), Some(l)) = (&mut ledgers, book.ledger) {
            all.push(l);
        }
    }
    Ok(PathResult { outcomes, ledgers })
}

/// Runs all strategies on `config.n_paths` shared paths in parallel.
///
/// Outcomes are collected in path order, so any downstream reduction is
/// independent of the number of worker threads.
pub fn run_strategies(
    model: &dyn MarketModel,
    config: &SimulationConfig,
    strategies: &[Strategy],
) -> Result<RunOutput> {
    config.validate()?;
    if strategies.is_empty() {
        return Err(Error::Parameter("no strategies to run".into()));
    }
    for s in strategies {
        s.check_admissible(model)?;
    }
    let per_path = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| run_path(model, config, strategies, i, false).map(|r| r.outcomes))
        .collect::<Result<Vec<_>>>()?;
    let outcomes = (0..strategies.len())
        .map(|s| per_path.iter().map(|p| p[s]).collect())
        .collect();
    Ok(RunOutput {
        labels: strategies.iter().map(Strategy::label).collect(),
        outcomes,
    })
}

/// Runs one strategy; see [`run_strategies`].
pub fn run_strategy(
    model: &dyn MarketModel,
    config: &SimulationConfig,
    strategy: &Strategy,
) -> Result<Vec<StrategyOutcome>> {
    let mut out = run_strategies(model, config, std::slice::from_ref(strategy))?;
    Ok(out.outcomes.pop().expect("one strategy"))
}
