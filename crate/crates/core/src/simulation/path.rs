//! Euler–Maruyama market paths.
//!
//! Each path owns an independent ChaCha stream selected by its index, so a
//! path is a pure function of `(seed, path_index)` regardless of how paths
//! are distributed over workers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::market_models::{contains, MarketModel, RawCoefficients};

use super::SimulationConfig;

/// Per-path random stream.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Advances the state and draws asset log-returns one grid step at a time.
pub struct PathStepper {
    rng: ChaCha8Rng,
    dt: f64,
    sqrt_dt: f64,
    support: Vec<(f64, f64)>,
    y: Vec<f64>,
}

impl PathStepper {
    pub fn new(model: &dyn MarketModel, y0: &[f64], dt: f64, seed: u64, path_index: u64) -> Result<Self> {
        let support = model.support();
        if !contains(&support, y0) {
            return Err(Error::Domain {
                state: y0.to_vec(),
                support,
            });
        }
        Ok(Self {
            rng: path_rng(seed, path_index),
            dt,
            sqrt_dt: dt.sqrt(),
            support,
            y: y0.to_vec(),
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    /// One step with coefficients `coeffs` frozen at the current state.
    ///
    /// Fills `shocks` with `ΔB` and `log_returns` with
    /// `(μⁱ − ½‖σⁱ‖²)dt + σⁱ·ΔB`, then moves the state, reflecting at the
    /// support boundary.
    pub fn step(
        &mut self,
        coeffs: &RawCoefficients,
        shocks: &mut [f64],
        log_returns: &mut [f64],
    ) -> Result<()> {
        for z in shocks.iter_mut() {
            let n: f64 = self.rng.sample(StandardNormal);
            *z = n * self.sqrt_dt;
        }
        for (i, x) in log_returns.iter_mut().enumerate() {
            let row = coeffs.sigma.row(i);
            let mut var = 0.0;
            let mut diffusion = 0.0;
            for (s, db) in row.iter().zip(shocks.iter()) {
                var += s * s;
                diffusion += s * db;
            }
            *x = (coeffs.mu[i] - 0.5 * var) * self.dt + diffusion;
        }
        for q in 0..self.y.len() {
            let row = coeffs.g.row(q);
            let mut next = self.y[q] + coeffs.b[q] * self.dt;
            for (g, db) in row.iter().zip(shocks.iter()) {
                next += g * db;
            }
            let (lo, hi) = self.support[q];
            if next < lo {
                next = 2.0 * lo - next;
            } else if next > hi {
                next = 2.0 * hi - next;
            }
            if !(next >= lo && next <= hi) {
                return Err(Error::Simulation(format!(
                    "state coordinate {q} left support [{lo}, {hi}] after reflection: {next}"
                )));
            }
            self.y[q] = next;
        }
        Ok(())
    }
}

/// State path on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub dt: f64,
    /// `n + 1` states at times `0, dt, …, n·dt`.
    pub states: Vec<Vec<f64>>,
}

impl StatePath {
    /// A path that stays at `y` for `n_steps` steps.
    pub fn frozen(y: Vec<f64>, dt: f64, n_steps: usize) -> Self {
        Self {
            dt,
            states: vec![y; n_steps + 1],
        }
    }

    pub fn horizon(&self) -> f64 {
        self.dt * (self.states.len().saturating_sub(1)) as f64
    }

    /// State at the last grid point not after `t`.
    pub fn state_at(&self, t: f64) -> &[f64] {
        let k = ((t / self.dt) + 1e-9).floor().max(0.0) as usize;
        &self.states[k.min(self.states.len() - 1)]
    }
}

/// A full market path: states plus per-step shocks and asset log-returns.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    pub state: StatePath,
    /// `n × d` Brownian increments.
    pub shocks: Vec<Vec<f64>>,
    /// `n × m` log-returns.
    pub log_returns: Vec<Vec<f64>>,
}

/// Simulates path `path_index` of the run described by `config`.
pub fn simulate_market_path(
    model: &dyn MarketModel,
    config: &SimulationConfig,
    path_index: u64,
) -> Result<MarketPath> {
    config.validate()?;
    let dims = model.dims();
    let n = config.n_steps();
    let y0 = config.initial_state(model);
    let mut stepper = PathStepper::new(model, &y0, config.dt, config.seed, path_index)?;
    let mut coeffs = model.raw_coefficients(&y0);
    let mut states = Vec::with_capacity(n + 1);
    let mut shocks = Vec::with_capacity(n);
    let mut log_returns = Vec::with_capacity(n);
    states.push(y0);
    for _ in 0..n {
        let mut db = vec![0.0; dims.drivers];
        let mut x = vec![0.0; dims.assets];
        stepper.step(&coeffs, &mut db, &mut x)?;
        states.push(stepper.state().to_vec());
        if !model.is_constant() {
            model.coefficients_into(stepper.state(), &mut coeffs);
        }
        shocks.push(db);
        log_returns.push(x);
    }
    Ok(MarketPath {
        state: StatePath {
            dt: config.dt,
            states,
        },
        shocks,
        log_returns,
    })
}

/// State path only (asset returns are still drawn so the stream matches
/// [`simulate_market_path`]).
pub fn simulate_state_path(
    model: &dyn MarketModel,
    config: &SimulationConfig,
    path_index: u64,
) -> Result<StatePath> {
    if model.dims().state == 0 {
        return Ok(StatePath::frozen(Vec::new(), config.dt, config.n_steps()));
    }
    Ok(simulate_market_path(model, config, path_index)?.state)
}
