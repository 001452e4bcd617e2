//! Diffusion coefficients of the risky assets and of the autonomous state
//! variable driving them.
//!
//! A model exposes, as functions of the state `y ∈ ℝᵖ`,
//!
//! ```text
//! dS/S = μ(y) dt + σ(y) dB        (m assets, d Brownian drivers)
//! dY   = b(y) dt + g(y) dB        (p state coordinates)
//! ```
//!
//! plus the Jacobians of `μ` and `Σ = σσᵀ` that enter the diffusion of the
//! Merton weight. Models without analytic derivatives fall back to central
//! finite differences.

mod black_scholes;
mod cutoff;
mod kim_omberg;

use std::fmt::Debug;

pub use black_scholes::BlackScholesModel;
pub use cutoff::{smooth_cutoff, SmoothCutoff};
pub use kim_omberg::{KimOmbergParams, TruncatedKimOmbergModel};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    /// Number of risky assets `m`.
    pub assets: usize,
    /// Number of Brownian drivers `d`.
    pub drivers: usize,
    /// State-variable dimension `p`.
    pub state: usize,
}

/// Coefficient functions evaluated at a single state, before any validation.
#[derive(Debug, Clone)]
pub struct RawCoefficients {
    pub mu: Vec<f64>,
    /// `m × d` asset loadings.
    pub sigma: Matrix,
    pub b: Vec<f64>,
    /// `p × d` state loadings.
    pub g: Matrix,
}

/// Validated coefficients together with the covariance and its inverse.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub mu: Vec<f64>,
    pub sigma: Matrix,
    pub b: Vec<f64>,
    pub g: Matrix,
    /// `Σ = σσᵀ`.
    pub cov: Matrix,
    /// `Σ⁻¹`, formed from the Cholesky factor.
    pub cov_inv: Matrix,
    pub chol: Cholesky,
}

/// Derivatives of `μ` and `Σ` with respect to the state.
#[derive(Debug, Clone)]
pub struct Jacobians {
    /// `m × p`, entry `(l, q)` is `∂μˡ/∂y_q`.
    pub dmu_dy: Matrix,
    /// One `m × m` matrix per state coordinate: `dcov_dy[q][(k, l)] = ∂Σᵏˡ/∂y_q`.
    pub dcov_dy: Vec<Matrix>,
}

impl Jacobians {
    pub fn zeros(dims: Dimensions) -> Self {
        Self {
            dmu_dy: Matrix::zeros(dims.assets, dims.state),
            dcov_dy: vec![Matrix::zeros(dims.assets, dims.assets); dims.state],
        }
    }

    /// Largest absolute deviation between two Jacobian sets, relative to the
    /// largest entry of `reference` (floored at one).
    pub fn max_rel_error(&self, reference: &Jacobians) -> f64 {
        let scale = reference
            .dmu_dy
            .as_slice()
            .iter()
            .chain(reference.dcov_dy.iter().flat_map(|m| m.as_slice()))
            .fold(1.0_f64, |s, v| s.max(v.abs()));
        let mut err = self.dmu_dy.max_abs_diff(&reference.dmu_dy);
        for (a, b) in self.dcov_dy.iter().zip(&reference.dcov_dy) {
            err = err.max(a.max_abs_diff(b));
        }
        err / scale
    }
}

/// A multidimensional diffusion market with an autonomous state variable.
///
/// Implementations are immutable after construction and shared across
/// simulation workers.
pub trait MarketModel: Send + Sync + Debug {
    fn dims(&self) -> Dimensions;

    /// Box support of the state variable, one interval per coordinate.
    fn support(&self) -> Vec<(f64, f64)>;

    fn raw_coefficients(&self, y: &[f64]) -> RawCoefficients;

    /// In-place variant of [`raw_coefficients`](Self::raw_coefficients) for hot loops.
    fn coefficients_into(&self, y: &[f64], out: &mut RawCoefficients) {
        *out = self.raw_coefficients(y);
    }

    /// Whether `σ` (hence `Σ`) is independent of the state.
    fn constant_covariance(&self) -> bool {
        self.is_constant()
    }

    /// Analytic Jacobians, if the model provides them.
    fn analytic_jacobians(&self, _y: &[f64]) -> Option<Jacobians> {
        None
    }

    /// Model-specific analytic lower bound on `‖β‖₂,₁` at a Merton state.
    fn nondegeneracy_bound(&self, _state: &crate::frictionless::MertonState) -> Option<f64> {
        None
    }

    /// Whether every coefficient is independent of the state.
    fn is_constant(&self) -> bool {
        self.dims().state == 0
    }

    /// Default initial state.
    fn default_state(&self) -> Vec<f64> {
        self.support()
            .iter()
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    fn name(&self) -> String;
}

pub fn contains(support: &[(f64, f64)], y: &[f64]) -> bool {
    support.len() == y.len()
        && support
            .iter()
            .zip(y)
            .all(|(&(lo, hi), &v)| v >= lo && v <= hi)
}

fn check_state(model: &dyn MarketModel, y: &[f64]) -> Result<()> {
    let dims = model.dims();
    if y.len() != dims.state {
        return Err(Error::Parameter(format!(
            "state has dimension {}, model expects {}",
            y.len(),
            dims.state
        )));
    }
    let support = model.support();
    if !contains(&support, y) {
        return Err(Error::Domain {
            state: y.to_vec(),
            support,
        });
    }
    Ok(())
}

/// Evaluates `μ, σ, b, g` at `y` together with `Σ` and `Σ⁻¹`.
pub fn evaluate_coefficients(model: &dyn MarketModel, y: &[f64]) -> Result<Coefficients> {
    check_state(model, y)?;
    let dims = model.dims();
    let raw = model.raw_coefficients(y);
    if raw.mu.len() != dims.assets
        || raw.sigma.shape() != (dims.assets, dims.drivers)
        || raw.b.len() != dims.state
        || raw.g.shape() != (dims.state, dims.drivers)
    {
        return Err(Error::Parameter(format!(
            "{} returned coefficients inconsistent with {dims:?}",
            model.name()
        )));
    }
    if !(raw.mu.iter().chain(&raw.b).all(|v| v.is_finite())
        && raw.sigma.is_finite()
        && raw.g.is_finite())
    {
        return Err(Error::Numerical(format!(
            "non-finite coefficients at y = {y:?}"
        )));
    }
    let cov = raw.sigma.gram();
    let chol = Cholesky::new(&cov)?;
    let cov_inv = chol.inverse();
    Ok(Coefficients {
        mu: raw.mu,
        sigma: raw.sigma,
        b: raw.b,
        g: raw.g,
        cov,
        cov_inv,
        chol,
    })
}

fn fd_step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

/// Central finite-difference Jacobians with `h = 1e-6·max(1, |y_q|)`.
///
/// Steps that would leave the support are taken one-sided.
pub fn finite_difference_jacobians(model: &dyn MarketModel, y: &[f64]) -> Result<Jacobians> {
    check_state(model, y)?;
    let dims = model.dims();
    let support = model.support();
    let mut jac = Jacobians::zeros(dims);
    let mut yp = y.to_vec();
    let mut ym = y.to_vec();
    for q in 0..dims.state {
        let h = fd_step(y[q]);
        let (lo, hi) = support[q];
        let up = (y[q] + h).min(hi);
        let down = (y[q] - h).max(lo);
        yp[q] = up;
        ym[q] = down;
        let cp = model.raw_coefficients(&yp);
        let cm = model.raw_coefficients(&ym);
        yp[q] = y[q];
        ym[q] = y[q];
        let span = up - down;
        let cov_p = cp.sigma.gram();
        let cov_m = cm.sigma.gram();
        for l in 0..dims.assets {
            jac.dmu_dy[(l, q)] = (cp.mu[l] - cm.mu[l]) / span;
            for k in 0..dims.assets {
                jac.dcov_dy[q][(k, l)] = (cov_p[(k, l)] - cov_m[(k, l)]) / span;
            }
        }
    }
    Ok(jac)
}

/// Jacobians of `μ` and `Σ`: analytic where available, finite differences otherwise.
pub fn jacobians(model: &dyn MarketModel, y: &[f64]) -> Result<Jacobians> {
    check_state(model, y)?;
    match model.analytic_jacobians(y) {
        Some(jac) => Ok(jac),
        None => finite_difference_jacobians(model, y),
    }
}

/// Builds `diag(vols)·L` where `L` is the lower Cholesky factor of `correlation`.
pub fn loadings_from_correlation(vols: &[f64], correlation: &Matrix) -> Result<Matrix> {
    let m = vols.len();
    if correlation.shape() != (m, m) {
        return Err(Error::Parameter(format!(
            "correlation matrix is {:?}, expected {m}x{m}",
            correlation.shape()
        )));
    }
    for (i, &v) in vols.iter().enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Parameter(format!("volatility {i} must be positive, got {v}")));
        }
    }
    for i in 0..m {
        if (correlation[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "correlation diagonal entry {i} is {}, expected 1",
                correlation[(i, i)]
            )));
        }
        for j in 0..i {
            if (correlation[(i, j)] - correlation[(j, i)]).abs() > 1e-12 {
                return Err(Error::Parameter(format!(
                    "correlation matrix is not symmetric at ({i}, {j})"
                )));
            }
            if correlation[(i, j)].abs() > 1.0 {
                return Err(Error::Parameter(format!(
                    "correlation ({i}, {j}) = {} outside [-1, 1]",
                    correlation[(i, j)]
                )));
            }
        }
    }
    let l = Cholesky::new(correlation)?.into_factor();
    for i in 0..m {
        let n = crate::linalg::norm2(l.row(i));
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::DegenerateCovariance(format!(
                "implied correlation diagonal {i} is {n}"
            )));
        }
    }
    Ok(Matrix::from_fn(m, m, |i, j| vols[i] * l[(i, j)]))
}

/// Two-asset correlation matrix `[[1, ρ], [ρ, 1]]`.
pub fn correlation_2x2(rho: f64) -> Matrix {
    Matrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).expect("2x2")
}

/// Reads a square matrix from CSV (no header, comma separated).
pub fn read_matrix_csv(path: &std::path::Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Input(format!("cannot read matrix file {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record
            .map_err(|e| Error::Input(format!("{}: record {}: {e}", path.display(), line + 1)))?;
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|e| {
                    Error::Input(format!("{}: row {}: '{s}': {e}", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let m = Matrix::from_rows(&rows).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    if m.rows() != m.cols() {
        return Err(Error::Input(format!(
            "{}: matrix is {}x{}, expected square",
            path.display(),
            m.rows(),
            m.cols()
        )));
    }
    Ok(m)
}
