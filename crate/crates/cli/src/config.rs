use std::path::{Path, PathBuf};
use std::sync::Arc;

use rebalancing::linalg::Matrix;
use rebalancing::market_models::{
    read_matrix_csv, BlackScholesModel, KimOmbergParams, MarketModel, SmoothCutoff,
    TruncatedKimOmbergModel,
};
use rebalancing::simulation::{RebalanceTo, SimulationConfig};
use rebalancing::{Error, Result};
use serde::{Deserialize, Serialize};

/// A complete run description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub simulation: SimulationSection,
    /// Empty means the default menu for the model.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strategies: Vec<StrategySpec>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    BlackScholes(BlackScholesSection),
    KimOmberg(KimOmbergSection),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlackScholesSection {
    pub mu: Vec<f64>,
    pub vols: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    /// CSV file with the correlation matrix, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KimOmbergSection {
    pub mean_reversion: f64,
    pub long_run_mean: f64,
    pub state_vol: f64,
    pub eta: f64,
    pub vols: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_file: Option<PathBuf>,
    /// One entry per asset, or a single entry shared by all assets.
    pub cutoffs: Vec<CutoffSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSection {
    pub y_min: f64,
    pub y_max: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "defaults::horizon")]
    pub horizon: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::n_paths")]
    pub n_paths: usize,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "defaults::gamma")]
    pub gamma: f64,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    /// State paths used for expectations in state-dependent models.
    #[serde(default = "defaults::expectation_paths")]
    pub expectation_paths: usize,
    #[serde(default = "defaults::yes")]
    pub control_variate: bool,
    #[serde(default)]
    pub allow_assumption_violation: bool,
}

mod defaults {
    pub fn horizon() -> f64 {
        20.0
    }
    pub fn dt() -> f64 {
        1.0 / 250.0
    }
    pub fn n_paths() -> usize {
        10_000
    }
    pub fn epsilon() -> f64 {
        0.01
    }
    pub fn gamma() -> f64 {
        5.0
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn expectation_paths() -> usize {
        1_000
    }
    pub fn yes() -> bool {
        true
    }
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            horizon: defaults::horizon(),
            dt: defaults::dt(),
            n_paths: defaults::n_paths(),
            epsilon: defaults::epsilon(),
            gamma: defaults::gamma(),
            seed: defaults::seed(),
            y0: None,
            expectation_paths: defaults::expectation_paths(),
            control_variate: true,
            allow_assumption_violation: false,
        }
    }
}

impl SimulationSection {
    pub fn to_config(&self) -> SimulationConfig {
        SimulationConfig {
            horizon: self.horizon,
            dt: self.dt,
            n_paths: self.n_paths,
            epsilon: self.epsilon,
            gamma: self.gamma,
            y0: self.y0.clone(),
            seed: self.seed,
            control_variate: self.control_variate,
            allow_assumption_violation: self.allow_assumption_violation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    TimeBased,
    ConstantFrequency,
    Periodic,
    BuyAndHold,
    MoveBased,
    PastedMoveBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// Rebalancing interval in years, `periodic` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<f64>,
    /// Fixed no-trade half-width for the move-based kinds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rebalance_to: Option<RebalanceTo>,
}

impl StrategySpec {
    pub fn of(kind: StrategyKind) -> Self {
        Self {
            kind,
            interval: None,
            halfwidth: None,
            rebalance_to: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Per-path outcome dump.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Input(format!("cannot serialize config: {e}")))
    }

    /// Reads a config file; relative matrix paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)
            .map_err(|e| Error::Input(format!("{}: {}", path.display(), strip_prefix(&e))))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(f) = p {
                if f.is_relative() {
                    *f = base.join(&*f);
                }
            }
        };
        match &mut cfg.model {
            ModelConfig::BlackScholes(m) => resolve(&mut m.correlation_file),
            ModelConfig::KimOmberg(m) => resolve(&mut m.correlation_file),
        }
        Ok(cfg)
    }

    pub fn build_model(&self) -> Result<Arc<dyn MarketModel>> {
        match &self.model {
            ModelConfig::BlackScholes(m) => {
                if m.mu.len() != m.vols.len() {
                    return Err(Error::Input(format!(
                        "model.mu has {} entries but model.vols has {}",
                        m.mu.len(),
                        m.vols.len()
                    )));
                }
                let corr = correlation(&m.correlation, &m.correlation_file, m.vols.len())?;
                Ok(Arc::new(BlackScholesModel::new(m.mu.clone(), m.vols.clone(), &corr)?))
            }
            ModelConfig::KimOmberg(m) => {
                let n = m.vols.len();
                let corr = correlation(&m.correlation, &m.correlation_file, n)?;
                let cutoffs = match m.cutoffs.len() {
                    1 => vec![m.cutoffs[0]; n],
                    k if k == n => m.cutoffs.clone(),
                    k => {
                        return Err(Error::Input(format!(
                            "model.cutoffs has {k} entries for {n} assets"
                        )))
                    }
                };
                let cutoffs = cutoffs
                    .iter()
                    .map(|c| SmoothCutoff::new(c.y_min, c.y_max, c.xi))
                    .collect::<Result<Vec<_>>>()?;
                let params = KimOmbergParams {
                    mean_reversion: m.mean_reversion,
                    long_run_mean: m.long_run_mean,
                    state_vol: m.state_vol,
                    eta: m.eta,
                    vols: m.vols.clone(),
                    correlation: corr,
                    cutoffs,
                };
                Ok(Arc::new(TruncatedKimOmbergModel::new(params)?))
            }
        }
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Input(s) => s.trim_start_matches("config: ").to_string(),
        other => other.to_string(),
    }
}

fn correlation(
    inline: &Option<Vec<Vec<f64>>>,
    file: &Option<PathBuf>,
    n: usize,
) -> Result<Matrix> {
    match (inline, file) {
        (Some(_), Some(_)) => Err(Error::Input(
            "set either model.correlation or model.correlation_file, not both".into(),
        )),
        (Some(rows), None) => {
            Matrix::from_rows(rows).map_err(|e| Error::Input(format!("model.correlation: {e}")))
        }
        (None, Some(path)) => {
            if !path.exists() {
                return Err(Error::Input(format!(
                    "model.correlation_file: {} does not exist",
                    path.display()
                )));
            }
            read_matrix_csv(path)
                .map_err(|e| Error::Input(format!("model.correlation_file: {}", strip_prefix(&e))))
        }
        (None, None) if n == 1 => Ok(Matrix::identity(1)),
        (None, None) => Err(Error::Input(format!(
            "model.correlation_file (or an inline model.correlation) is required for {n} assets"
        ))),
    }
}
