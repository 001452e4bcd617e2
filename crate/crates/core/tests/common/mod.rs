#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rebalancing::asymptotics::optimal_a;
use rebalancing::frictionless::{merton_weights, MertonState};
use rebalancing::linalg::Matrix;
use rebalancing::market_models::{
    correlation_2x2, BlackScholesModel, Dimensions, Jacobians, KimOmbergParams, MarketModel,
    RawCoefficients, TruncatedKimOmbergModel,
};
use rebalancing::simulation::{
    rebalance_solve, run_path, simulate_market_path, SimulationConfig, Strategy,
};

/// Two assets, three drivers and a two-dimensional state, with
/// state-dependent expected returns and volatilities:
///
/// ```text
/// μ(y)  = (0.05 + 0.02 tanh y₁, 0.04 + 0.015 tanh y₂)
/// σ(y)  = diag(1 + 0.2 sin y₁, 1 + 0.15 cos y₂) · S · Q
/// dY    = −0.5 Y dt + G · Q dB
/// ```
#[derive(Debug, Clone)]
pub struct StateVolModel {
    s: Matrix,
    g: Matrix,
}

const S_ROWS: [[f64; 3]; 2] = [[0.15, 0.02, 0.03], [0.05, 0.12, 0.04]];
const G_ROWS: [[f64; 3]; 2] = [[0.3, 0.1, 0.0], [0.05, 0.2, 0.1]];

impl StateVolModel {
    pub fn new(q: &Matrix) -> Self {
        let s = Matrix::from_rows(&S_ROWS.map(|r| r.to_vec())).unwrap().matmul(q);
        let g = Matrix::from_rows(&G_ROWS.map(|r| r.to_vec())).unwrap().matmul(q);
        Self { s, g }
    }

    fn scales(y: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
        let s = [1.0 + 0.2 * y[0].sin(), 1.0 + 0.15 * y[1].cos()];
        // ds[i][q] = ∂sᵢ/∂y_q
        let ds = [[0.2 * y[0].cos(), 0.0], [0.0, -0.15 * y[1].sin()]];
        (s, ds)
    }
}

impl MarketModel for StateVolModel {
    fn dims(&self) -> Dimensions {
        Dimensions {
            assets: 2,
            drivers: 3,
            state: 2,
        }
    }

    fn support(&self) -> Vec<(f64, f64)> {
        vec![(-3.0, 3.0); 2]
    }

    fn raw_coefficients(&self, y: &[f64]) -> RawCoefficients {
        let (s, _) = Self::scales(y);
        RawCoefficients {
            mu: vec![0.05 + 0.02 * y[0].tanh(), 0.04 + 0.015 * y[1].tanh()],
            sigma: Matrix::from_fn(2, 3, |i, j| s[i] * self.s[(i, j)]),
            b: vec![-0.5 * y[0], -0.5 * y[1]],
            g: self.g.clone(),
        }
    }

    fn constant_covariance(&self) -> bool {
        false
    }

    fn analytic_jacobians(&self, y: &[f64]) -> Option<Jacobians> {
        let (s, ds) = Self::scales(y);
        let c = self.s.gram();
        let sech2 = |x: f64| 1.0 / x.cosh().powi(2);
        let dmu_dy = Matrix::from_rows(&[
            vec![0.02 * sech2(y[0]), 0.0],
            vec![0.0, 0.015 * sech2(y[1])],
        ])
        .unwrap();
        let dcov_dy = (0..2)
            .map(|q| {
                Matrix::from_fn(2, 2, |k, l| (ds[k][q] * s[l] + s[k] * ds[l][q]) * c[(k, l)])
            })
            .collect();
        Some(Jacobians { dmu_dy, dcov_dy })
    }

    fn name(&self) -> String {
        "state_vol".into()
    }
}

/// `R₀₁(a)·R₁₂(b)·R₀₂(c)` in three dimensions.
pub fn rotation3(a: f64, b: f64, c: f64) -> Matrix {
    let givens = |i: usize, j: usize, t: f64| {
        let mut m = Matrix::identity(3);
        m[(i, i)] = t.cos();
        m[(j, j)] = t.cos();
        m[(i, j)] = -t.sin();
        m[(j, i)] = t.sin();
        m
    };
    givens(0, 1, a).matmul(&givens(1, 2, b)).matmul(&givens(0, 2, c))
}

/// Random orthogonal `d × d` matrix by Gram–Schmidt on Gaussian columns.
pub fn random_orthogonal(d: usize, rng: &mut impl Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Matrix::from_fn(d, d, |i, j| cols[j][i])
}

pub fn ko1() -> Arc<dyn MarketModel> {
    Arc::new(TruncatedKimOmbergModel::new(KimOmbergParams::table2()).unwrap())
}

pub fn ko2(rho: f64) -> Arc<dyn MarketModel> {
    Arc::new(TruncatedKimOmbergModel::new(KimOmbergParams::table4(rho)).unwrap())
}

pub fn bs1() -> Arc<dyn MarketModel> {
    Arc::new(BlackScholesModel::univariate(0.08, 0.16).unwrap())
}

pub fn bs2(rho: f64) -> Arc<dyn MarketModel> {
    Arc::new(BlackScholesModel::new(vec![0.08, 0.08], vec![0.16, 0.16], &correlation_2x2(rho)).unwrap())
}

/// Every model family with a state variable, plus constant-coefficient ones.
pub fn all_models() -> Vec<(&'static str, Arc<dyn MarketModel>)> {
    vec![
        ("bs1", bs1()),
        ("bs2", bs2(0.3)),
        ("ko1", ko1()),
        ("ko2", ko2(0.6)),
        ("state_vol", Arc::new(StateVolModel::new(&rotation3(0.3, -0.7, 1.1)))),
    ]
}

/// Uniform states on the box covering the cutoff bands (Kim–Omberg) or the
/// interior of the support.
pub fn random_states(model: &dyn MarketModel, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = model.dims().state;
    if p == 0 {
        return vec![Vec::new(); n];
    }
    let boxes: Vec<(f64, f64)> = if model.name().starts_with("kim_omberg") {
        vec![(-0.12, 0.23)]
    } else {
        model.support().iter().map(|(lo, hi)| (0.8 * lo, 0.8 * hi)).collect()
    };
    (0..n)
        .map(|_| boxes.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect())
        .collect()
}

/// Largest deviation between `σ̃` and `(∂w*/∂y)·g` with central
/// finite-difference `∂w*/∂y`, relative to the largest `|σ̃|` entry seen
/// over `states`.
pub fn sigma_tilde_fd_error(model: &dyn MarketModel, gamma: f64, states: &[Vec<f64>]) -> f64 {
    let dims = model.dims();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for y in states {
        let state = MertonState::compute(model, y, gamma).unwrap();
        let coeffs = model.raw_coefficients(y);
        let mut dw = Matrix::zeros(dims.assets, dims.state);
        for q in 0..dims.state {
            let h = 1e-5 * y[q].abs().max(1.0);
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[q] += h;
            ym[q] -= h;
            let wp = merton_weights(model, &yp, gamma).unwrap().weights;
            let wm = merton_weights(model, &ym, gamma).unwrap().weights;
            for i in 0..dims.assets {
                dw[(i, q)] = (wp[i] - wm[i]) / (2.0 * h);
            }
        }
        let fd = dw.matmul(&coeffs.g);
        scale = fd.as_slice().iter().fold(scale, |m, v| m.max(v.abs()));
        worst = worst.max(state.sigma_tilde.max_abs_diff(&fd));
    }
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

/// Root of `s = Σ|dⁱ − εwⁱs|` by scanning `s` on a grid of step `step`.
pub fn grid_scan_root(d: &[f64], w: &[f64], eps: f64, step: f64) -> f64 {
    let phi = |s: f64| d.iter().zip(w).map(|(a, b)| (a - eps * b * s).abs()).sum::<f64>() - s;
    let upper = 2.0 * d.iter().map(|v| v.abs()).sum::<f64>() + step;
    let n = (upper / step).ceil() as usize;
    let mut prev = phi(0.0);
    for k in 1..=n {
        let s = k as f64 * step;
        let cur = phi(s);
        if prev >= 0.0 && cur <= 0.0 {
            // linear interpolation inside the bracketing cell
            let prev_s = s - step;
            return if prev == cur { s } else { prev_s + step * prev / (prev - cur) };
        }
        prev = cur;
    }
    f64::NAN
}

/// Worst `|ΔL − ΔL_oracle|` against the grid scan over random two-asset trades.
pub fn rebalance_grid_error(n_cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_cases {
        let w = [rng.random_range(0.0..0.6), rng.random_range(0.0..0.4)];
        let d = [rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)];
        let eps = rng.random_range(0.001..0.05);
        let r = rebalance_solve(&d, &w, eps).unwrap();
        let s = grid_scan_root(&d, &w, eps, 1e-8);
        for i in 0..2 {
            worst = worst.max((r.delta_l[i] - (d[i] - eps * w[i] * s)).abs());
        }
        worst = worst.max((r.cost_fraction - eps * s).abs());
    }
    worst
}

/// Worst `|ΔL − d/(1 ± εw)|` over random one-asset trades.
pub fn rebalance_1d_error(n_cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_cases {
        let w = rng.random_range(0.0..1.0);
        let d: f64 = rng.random_range(-0.3..0.3);
        let eps = rng.random_range(0.0..0.1);
        let r = rebalance_solve(&[d], &[w], eps).unwrap();
        let s = d.abs() / (1.0 + eps * w * d.signum());
        let expect = d - eps * w * s;
        worst = worst.max((r.delta_l[0] - expect).abs());
        worst = worst.max((r.cost_fraction - eps * s).abs());
    }
    worst
}

/// Deviation of post-trade weights from the target and of the wealth factor
/// from `1 − εs`, when the trade is executed in dollars.
pub fn rebalance_dollar_error(n_cases: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut werr, mut verr) = (0.0f64, 0.0f64);
    for _ in 0..n_cases {
        let m = rng.random_range(1..5);
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.8 / m as f64)).collect();
        let pre: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..0.9 / m as f64)).collect();
        let eps = rng.random_range(0.0..0.05);
        let wealth = rng.random_range(0.5..2.0);
        let d: Vec<f64> = w.iter().zip(&pre).map(|(a, b)| a - b).collect();
        let r = rebalance_solve(&d, &w, eps).unwrap();
        let cash_before = wealth * (1.0 - pre.iter().sum::<f64>());
        let traded: f64 = r.delta_l.iter().map(|x| x * wealth).sum();
        let fee = eps * r.delta_l.iter().map(|x| x.abs()).sum::<f64>() * wealth;
        let cash_after = cash_before - traded - fee;
        let pos: Vec<f64> = (0..m).map(|i| wealth * (pre[i] + r.delta_l[i])).collect();
        let after = cash_after + pos.iter().sum::<f64>();
        verr = verr.max((after / wealth - (1.0 - r.cost_fraction)).abs());
        for i in 0..m {
            werr = werr.max((pos[i] / after - w[i]).abs());
        }
    }
    (werr, verr)
}

/// Replays the trade ledgers of path `index` on the simulated returns and
/// reports the worst relative wealth mismatch and post-trade weight gap.
pub fn ledger_replay_error(
    model: &dyn MarketModel,
    config: &SimulationConfig,
    strategies: &[Strategy],
    index: u64,
) -> (f64, f64) {
    let res = run_path(model, config, strategies, index, true).unwrap();
    let path = simulate_market_path(model, config, index).unwrap();
    let y0 = config.initial_state(model);
    let w0 = merton_weights(model, &y0, config.gamma).unwrap().weights;
    let mut wealth_err = 0.0f64;
    let mut weight_err = 0.0f64;
    for (outcome, ledger) in res.outcomes.iter().zip(res.ledgers.unwrap()) {
        let mut pos = w0.clone();
        let mut cash = 1.0 - w0.iter().sum::<f64>();
        let mut trades = ledger.iter().peekable();
        for (k, lr) in path.log_returns.iter().enumerate() {
            pos.iter_mut().zip(lr).for_each(|(p, x)| *p *= x.exp());
            while let Some(t) = trades.next_if(|t| t.step == k + 1) {
                let wealth = cash + pos.iter().sum::<f64>();
                wealth_err = wealth_err.max((t.wealth_before - wealth).abs() / wealth);
                let after = wealth * (1.0 - t.cost_fraction);
                wealth_err = wealth_err.max((t.wealth_after - after).abs() / after);
                let fee = t.cost_fraction * wealth;
                let paid: f64 = t.delta_l.iter().map(|x| x.abs()).sum::<f64>() * config.epsilon * wealth;
                wealth_err = wealth_err.max((fee - paid).abs() / wealth);
                for i in 0..pos.len() {
                    let pre = pos[i] / wealth;
                    wealth_err = wealth_err.max((t.pre_weights[i] - pre).abs());
                    pos[i] = (pre + t.delta_l[i]) * wealth;
                }
                cash = after - pos.iter().sum::<f64>();
                for i in 0..pos.len() {
                    wealth_err = wealth_err.max((pos[i] / after - t.post_weights[i]).abs());
                    // untraded coordinates carry a zero target
                    if t.target[i] != 0.0 {
                        weight_err = weight_err.max((t.post_weights[i] - t.target[i]).abs());
                    }
                }
            }
        }
        assert!(trades.next().is_none(), "unreplayed trades");
        let terminal = cash + pos.iter().sum::<f64>();
        wealth_err = wealth_err.max((outcome.terminal_wealth - terminal).abs() / terminal);
    }
    (wealth_err, weight_err)
}

/// Largest change of `‖β‖₂,₁`, `tr(βᵀΣβ)` and `A*` (relative) when the
/// Brownian drivers are rotated.
pub fn driver_rotation_error(gamma: f64, n_rotations: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let base_sv = StateVolModel::new(&Matrix::identity(3));
    let base_bs = BlackScholesModel::from_loadings(
        vec![0.06, 0.05, 0.04],
        Matrix::from_rows(&[
            vec![0.15, 0.0, 0.0],
            vec![0.06, 0.14, 0.0],
            vec![0.03, 0.05, 0.18],
        ])
        .unwrap(),
    )
    .unwrap();
    let states = random_states(&base_sv, 5, seed ^ 0xabc);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    for _ in 0..n_rotations {
        let q = random_orthogonal(3, &mut rng);
        let sv = StateVolModel::new(&q);
        for y in &states {
            let a = MertonState::compute(&base_sv, y, gamma).unwrap();
            let b = MertonState::compute(&sv, y, gamma).unwrap();
            worst = worst
                .max(rel(b.beta_l21(), a.beta_l21()))
                .max(rel(b.beta_cov_trace(), a.beta_cov_trace()))
                .max(rel(optimal_a(&b).unwrap(), optimal_a(&a).unwrap()));
        }
        let bs = BlackScholesModel::from_loadings(base_bs.mu().to_vec(), base_bs.sigma().matmul(&q))
            .unwrap();
        let a = MertonState::compute(&base_bs, &[], gamma).unwrap();
        let b = MertonState::compute(&bs, &[], gamma).unwrap();
        worst = worst
            .max(rel(b.beta_l21(), a.beta_l21()))
            .max(rel(b.beta_cov_trace(), a.beta_cov_trace()))
            .max(rel(optimal_a(&b).unwrap(), optimal_a(&a).unwrap()));
    }
    worst
}

/// Runs `f` inside a dedicated rayon pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}
