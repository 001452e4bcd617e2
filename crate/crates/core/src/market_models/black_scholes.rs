use crate::error::{Error, Result};
use crate::frictionless::MertonState;
use crate::linalg::Matrix;

use super::{loadings_from_correlation, Dimensions, Jacobians, MarketModel, RawCoefficients};

/// Multivariate Black–Scholes market: constant `μ` and `σ`, no state variable.
#[derive(Debug, Clone)]
pub struct BlackScholesModel {
    mu: Vec<f64>,
    sigma: Matrix,
}

impl BlackScholesModel {
    /// Builds loadings from volatilities and a correlation matrix (lower-triangular factor).
    pub fn new(mu: Vec<f64>, vols: Vec<f64>, correlation: &Matrix) -> Result<Self> {
        if mu.len() != vols.len() {
            return Err(Error::Parameter(format!(
                "{} expected returns for {} volatilities",
                mu.len(),
                vols.len()
            )));
        }
        let sigma = loadings_from_correlation(&vols, correlation)?;
        Self::from_loadings(mu, sigma)
    }

    pub fn univariate(mu: f64, vol: f64) -> Result<Self> {
        Self::new(vec![mu], vec![vol], &Matrix::identity(1))
    }

    /// Uses an arbitrary `m × d` loading matrix.
    pub fn from_loadings(mu: Vec<f64>, sigma: Matrix) -> Result<Self> {
        if mu.is_empty() || sigma.rows() != mu.len() || sigma.cols() == 0 {
            return Err(Error::Parameter(format!(
                "loadings {:?} incompatible with {} assets",
                sigma.shape(),
                mu.len()
            )));
        }
        if !(mu.iter().all(|v| v.is_finite()) && sigma.is_finite()) {
            return Err(Error::Parameter("non-finite Black-Scholes coefficients".into()));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }
}

impl MarketModel for BlackScholesModel {
    fn dims(&self) -> Dimensions {
        Dimensions {
            assets: self.mu.len(),
            drivers: self.sigma.cols(),
            state: 0,
        }
    }

    fn support(&self) -> Vec<(f64, f64)> {
        Vec::new()
    }

    fn raw_coefficients(&self, _y: &[f64]) -> RawCoefficients {
        RawCoefficients {
            mu: self.mu.clone(),
            sigma: self.sigma.clone(),
            b: Vec::new(),
            g: Matrix::zeros(0, self.sigma.cols()),
        }
    }

    fn analytic_jacobians(&self, _y: &[f64]) -> Option<Jacobians> {
        Some(Jacobians::zeros(self.dims()))
    }

    /// One asset: `σ|w*(1−w*)|`. Two assets: `|w*¹w*²σ²²|`, the `(1,2)` entry of `β`.
    fn nondegeneracy_bound(&self, state: &MertonState) -> Option<f64> {
        let w = &state.w_star;
        match (w.len(), self.sigma.shape()) {
            (1, (1, 1)) => Some(self.sigma[(0, 0)].abs() * (w[0] * (1.0 - w[0])).abs()),
            (2, (2, 2)) if self.sigma[(0, 1)] == 0.0 => {
                Some((w[0] * w[1] * self.sigma[(1, 1)]).abs())
            }
            _ => None,
        }
    }

    fn name(&self) -> String {
        format!("black_scholes(m={})", self.mu.len())
    }
}
