mod config;
mod engine;
pub mod path;
mod rebalance;
mod strategy;

pub use config::SimulationConfig;
pub use engine::{
    run_path, run_strategies, run_strategy, PathResult, RunOutput, StrategyOutcome, TradeRecord,
};
pub use path::{simulate_market_path, simulate_state_path, MarketPath, StatePath};
pub use rebalance::{rebalance_solve, Rebalance};
pub use strategy::{move_based_halfwidth_1d, pasted_halfwidths, HalfWidth, RebalanceTo, Strategy};
