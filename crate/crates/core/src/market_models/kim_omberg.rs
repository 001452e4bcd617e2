use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frictionless::MertonState;
use crate::linalg::Matrix;

use super::{
    loadings_from_correlation, Dimensions, Jacobians, MarketModel, RawCoefficients, SmoothCutoff,
};

/// Parameters of the truncated Kim–Omberg market.
///
/// One mean-reverting state `Y` drives the expected return of every asset
/// through a smooth cutoff `μⁱ(y)`; asset volatilities are constant.
///
/// ```text
/// dSⁱ/Sⁱ = μⁱ(Y) dt + σⁱ dB
/// dY     = λ (Ȳ − μ¹(Y)) dt + α_Y η dB¹ + α_Y √(1−η²) dB²
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KimOmbergParams {
    /// Mean-reversion speed `λ_Y` (1/years).
    pub mean_reversion: f64,
    /// Long-run mean `Ȳ`.
    pub long_run_mean: f64,
    /// State volatility `α_Y`.
    pub state_vol: f64,
    /// Correlation `η` between the state and the first driver.
    pub eta: f64,
    pub vols: Vec<f64>,
    pub correlation: Matrix,
    /// One cutoff per asset.
    pub cutoffs: Vec<SmoothCutoff>,
}

impl KimOmbergParams {
    /// Single-asset parameters of the US equity example (λ=0.2712, Ȳ=5.6%,
    /// α_Y=3.68%, σ=14.28%, η=−0.9351). The cutoff sits three stationary
    /// standard deviations from the mean.
    pub fn table2() -> Self {
        let y_bar = 0.056;
        Self {
            mean_reversion: 0.2712,
            long_run_mean: y_bar,
            state_vol: 0.0368,
            eta: -0.9351,
            vols: vec![0.1428],
            correlation: Matrix::identity(1),
            cutoffs: vec![SmoothCutoff::symmetric(y_bar, 0.15, 0.02).expect("valid cutoff")],
        }
    }

    /// Two-asset variant with inter-asset correlation `rho`.
    pub fn table4(rho: f64) -> Self {
        let one = Self::table2();
        Self {
            vols: vec![0.1428, 0.1428],
            correlation: super::correlation_2x2(rho),
            cutoffs: vec![one.cutoffs[0]; 2],
            ..one
        }
    }

    /// Stationary standard deviation of the untruncated OU state.
    pub fn stationary_std(&self) -> f64 {
        self.state_vol / (2.0 * self.mean_reversion).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct TruncatedKimOmbergModel {
    params: KimOmbergParams,
    sigma: Matrix,
    state_loading: Vec<f64>,
    support: (f64, f64),
}

impl TruncatedKimOmbergModel {
    pub fn new(params: KimOmbergParams) -> Result<Self> {
        let m = params.vols.len();
        if m == 0 {
            return Err(Error::Parameter("Kim-Omberg model needs at least one asset".into()));
        }
        if params.cutoffs.len() != m {
            return Err(Error::Parameter(format!(
                "{} cutoffs for {m} assets",
                params.cutoffs.len()
            )));
        }
        for c in &params.cutoffs {
            // re-validate, the struct may come straight from a config file
            SmoothCutoff::new(c.y_min, c.y_max, c.xi)?;
        }
        if !(params.mean_reversion > 0.0) {
            return Err(Error::Parameter(format!(
                "mean reversion must be positive, got {}",
                params.mean_reversion
            )));
        }
        if !(params.state_vol >= 0.0) {
            return Err(Error::Parameter(format!(
                "state volatility must be non-negative, got {}",
                params.state_vol
            )));
        }
        if !(params.eta > -1.0 && params.eta < 1.0) {
            return Err(Error::Parameter(format!("eta must lie in (-1, 1), got {}", params.eta)));
        }
        let first = params.cutoffs[0];
        if !(params.long_run_mean > first.y_min && params.long_run_mean < first.y_max) {
            return Err(Error::Parameter(format!(
                "long-run mean {} outside the cutoff interval ({}, {})",
                params.long_run_mean, first.y_min, first.y_max
            )));
        }
        let drivers = m.max(2);
        let asset = loadings_from_correlation(&params.vols, &params.correlation)?;
        let sigma = Matrix::from_fn(m, drivers, |i, j| if j < m { asset[(i, j)] } else { 0.0 });
        let mut state_loading = vec![0.0; drivers];
        state_loading[0] = params.state_vol * params.eta;
        state_loading[1] = params.state_vol * (1.0 - params.eta * params.eta).sqrt();
        let pad = 10.0 * params.stationary_std();
        let lo = params.cutoffs.iter().map(|c| c.y_min).fold(f64::INFINITY, f64::min);
        let hi = params.cutoffs.iter().map(|c| c.y_max).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            params,
            sigma,
            state_loading,
            support: (lo - pad, hi + pad),
        })
    }

    pub fn params(&self) -> &KimOmbergParams {
        &self.params
    }

    pub fn expected_return(&self, asset: usize, y: f64) -> f64 {
        self.params.cutoffs[asset].value(y)
    }
}

impl MarketModel for TruncatedKimOmbergModel {
    fn dims(&self) -> Dimensions {
        Dimensions {
            assets: self.params.vols.len(),
            drivers: self.sigma.cols(),
            state: 1,
        }
    }

    fn support(&self) -> Vec<(f64, f64)> {
        vec![self.support]
    }

    fn raw_coefficients(&self, y: &[f64]) -> RawCoefficients {
        let y = y[0];
        let mu: Vec<f64> = self.params.cutoffs.iter().map(|c| c.value(y)).collect();
        let b = vec![self.params.mean_reversion * (self.params.long_run_mean - mu[0])];
        let g = Matrix::from_rows(&[self.state_loading.clone()]).expect("1 x d");
        RawCoefficients {
            mu,
            sigma: self.sigma.clone(),
            b,
            g,
        }
    }

    fn coefficients_into(&self, y: &[f64], out: &mut RawCoefficients) {
        if out.mu.len() != self.params.vols.len() || out.sigma.shape() != self.sigma.shape() {
            *out = self.raw_coefficients(y);
            return;
        }
        for (m, c) in out.mu.iter_mut().zip(&self.params.cutoffs) {
            *m = c.value(y[0]);
        }
        out.b[0] = self.params.mean_reversion * (self.params.long_run_mean - out.mu[0]);
    }

    fn constant_covariance(&self) -> bool {
        true
    }

    fn analytic_jacobians(&self, y: &[f64]) -> Option<Jacobians> {
        let mut jac = Jacobians::zeros(self.dims());
        for (l, c) in self.params.cutoffs.iter().enumerate() {
            jac.dmu_dy[(l, 0)] = c.derivative(y[0]);
        }
        Some(jac)
    }

    /// `|β¹²|` for one asset and `w*¹w*²σ²²` for two assets.
    fn nondegeneracy_bound(&self, state: &MertonState) -> Option<f64> {
        match state.w_star.len() {
            1 => Some(state.beta[(0, 1)].abs()),
            2 => Some((state.w_star[0] * state.w_star[1] * self.sigma[(1, 1)]).max(0.0)),
            _ => None,
        }
    }

    fn default_state(&self) -> Vec<f64> {
        vec![self.params.long_run_mean]
    }

    fn name(&self) -> String {
        format!("kim_omberg(m={})", self.params.vols.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_models::{evaluate_coefficients, finite_difference_jacobians, jacobians};

    #[test]
    fn interior_jacobian_is_ones() {
        let model = TruncatedKimOmbergModel::new(KimOmbergParams::table4(0.3)).unwrap();
        let j = jacobians(&model, &[0.056]).unwrap();
        assert_eq!(j.dmu_dy.shape(), (2, 1));
        assert_eq!(j.dmu_dy[(0, 0)], 1.0);
        assert_eq!(j.dmu_dy[(1, 0)], 1.0);
        assert!(j.dcov_dy[0].as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transition_band_matches_finite_differences() {
        let model = TruncatedKimOmbergModel::new(KimOmbergParams::table2()).unwrap();
        let c = model.params().cutoffs[0];
        for y in [c.y_max - 0.3 * c.xi, c.y_max - 0.5 * c.xi, c.y_min + 0.7 * c.xi] {
            let a = jacobians(&model, &[y]).unwrap();
            let s = a.dmu_dy[(0, 0)];
            assert!(s > 0.0 && s < 1.0);
            let fd = finite_difference_jacobians(&model, &[y]).unwrap();
            assert!(a.max_rel_error(&fd) < 1e-6);
        }
    }

    #[test]
    fn loadings_follow_driver_convention() {
        let p = KimOmbergParams::table2();
        let model = TruncatedKimOmbergModel::new(p.clone()).unwrap();
        let c = evaluate_coefficients(&model, &[0.056]).unwrap();
        assert_eq!(c.sigma.shape(), (1, 2));
        assert_eq!(c.sigma[(0, 1)], 0.0);
        assert!((c.g[(0, 0)] - p.state_vol * p.eta).abs() < 1e-16);
        assert!((c.g[(0, 1)] - p.state_vol * (1.0 - p.eta * p.eta).sqrt()).abs() < 1e-16);
        assert_eq!(c.b[0], 0.0);
    }

    #[test]
    fn rejects_bad_eta_and_cutoff() {
        let mut p = KimOmbergParams::table2();
        p.eta = 1.0;
        assert!(TruncatedKimOmbergModel::new(p).is_err());
        let mut p = KimOmbergParams::table2();
        p.cutoffs[0].xi = 0.0;
        assert!(matches!(TruncatedKimOmbergModel::new(p), Err(Error::Parameter(_))));
    }
}
