use crate::error::{Error, Result};

/// A proportional-cost trade back to a target weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Rebalance {
    /// Traded amounts as fractions of pre-trade wealth.
    pub delta_l: Vec<f64>,
    /// Turnover `s = Σ|ΔLⁱ|`.
    pub turnover: f64,
    /// Fraction of wealth paid, `ε·s`.
    pub cost_fraction: f64,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 200;
const TOLERANCE: f64 = 1e-14;

/// Solves `ΔLⁱ + ε·wⁱ·Σₖ|ΔLᵏ| = dⁱ` where `d = w_target − w_pre`.
///
/// Reduces to the scalar fixed point `s = Σᵢ|dⁱ − ε·wⁱ·s|`, a contraction
/// with factor `ε·Σ|wⁱ|`, iterated from `s₀ = Σ|dⁱ|`. After the trade the
/// weights equal `w_target` and wealth is multiplied by `1 − ε·s`.
pub fn rebalance_solve(d: &[f64], w_target: &[f64], epsilon: f64) -> Result<Rebalance> {
    if d.len() != w_target.len() {
        return Err(Error::Parameter(format!(
            "trade vector has {} entries, target {}",
            d.len(),
            w_target.len()
        )));
    }
    let contraction = epsilon * w_target.iter().map(|w| w.abs()).sum::<f64>();
    if !(epsilon >= 0.0) || !(contraction < 1.0) {
        return Err(Error::Parameter(format!(
            "rebalance needs ε·Σ|w| < 1, got {contraction}"
        )));
    }
    let residual = |s: f64| -> f64 {
        d.iter()
            .zip(w_target)
            .map(|(di, wi)| (di - epsilon * wi * s).abs())
            .sum()
    };
    let mut s = d.iter().map(|v| v.abs()).sum::<f64>();
    let mut iterations = 0;
    if epsilon > 0.0 {
        loop {
            iterations += 1;
            let next = residual(s);
            let delta = (next - s).abs();
            s = next;
            if delta < TOLERANCE {
                break;
            }
            if iterations >= MAX_ITERATIONS {
                return Err(Error::Numerical(format!(
                    "rebalance fixed point did not converge in {MAX_ITERATIONS} iterations (|Δs| = {delta:e})"
                )));
            }
        }
    }
    let delta_l = d
        .iter()
        .zip(w_target)
        .map(|(di, wi)| di - epsilon * wi * s)
        .collect();
    Ok(Rebalance {
        delta_l,
        turnover: s,
        cost_fraction: epsilon * s,
        iterations,
    })
}
