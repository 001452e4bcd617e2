use thiserror::Error;

/// Errors raised by model evaluation, asymptotic formulas and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("covariance matrix is not positive definite: {0}")]
    DegenerateCovariance(String),

    #[error("state {state:?} outside model support {support:?}")]
    Domain {
        state: Vec<f64>,
        support: Vec<(f64, f64)>,
    },

    #[error("model assumption violated: {0}")]
    Assumption(String),

    #[error("degenerate target: ||beta||_(2,1) = {norm:e}; the target is buy-and-hold and the small-cost regime does not apply")]
    DegenerateTarget { norm: f64 },

    #[error("invalid discretization rule: {0}")]
    Rule(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("simulation failure: {0}")]
    Simulation(String),

    #[error("input error: {0}")]
    Input(String),
}

impl Error {
    /// Whether the error stems from user input rather than a numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Input(_)
                | Error::Assumption(_)
                | Error::Domain { .. }
                | Error::DegenerateCovariance(_)
                | Error::DegenerateTarget { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
