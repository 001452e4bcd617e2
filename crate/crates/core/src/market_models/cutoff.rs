use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smooth truncation of the identity: `f(y) = y` on `[y_min+ξ, y_max−ξ]`,
/// constant outside `(y_min, y_max)`, with a quintic-smoothstep derivative
/// on each band of width `ξ` so that `f′` is C².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothCutoff {
    pub y_min: f64,
    pub y_max: f64,
    pub xi: f64,
}

/// `S(t) = 6t⁵ − 15t⁴ + 10t³`.
#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// `S′(t) = 30 t² (1 − t)²`.
#[inline]
fn smoothstep_prime(t: f64) -> f64 {
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

/// `∫₀ᵗ S = t⁶ − 3t⁵ + 2.5t⁴`.
#[inline]
fn smoothstep_integral(t: f64) -> f64 {
    t * t * t * t * (2.5 + t * (-3.0 + t))
}

impl SmoothCutoff {
    pub fn new(y_min: f64, y_max: f64, xi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::Parameter(format!(
                "cutoff smoothing width must be positive, got {xi}"
            )));
        }
        if !(y_min.is_finite() && y_max.is_finite() && y_min + 2.0 * xi < y_max) {
            return Err(Error::Parameter(format!(
                "cutoff levels need y_min + 2ξ < y_max, got y_min={y_min}, y_max={y_max}, ξ={xi}"
            )));
        }
        Ok(Self { y_min, y_max, xi })
    }

    /// Cutoff symmetric about `center` with identity region `center ± (half_width − ξ)`.
    pub fn symmetric(center: f64, half_width: f64, xi: f64) -> Result<Self> {
        Self::new(center - half_width, center + half_width, xi)
    }

    fn lower_inner(&self) -> f64 {
        self.y_min + self.xi
    }

    fn upper_inner(&self) -> f64 {
        self.y_max - self.xi
    }

    pub fn value(&self, y: f64) -> f64 {
        let (lo, hi) = (self.lower_inner(), self.upper_inner());
        if y >= lo && y <= hi {
            y
        } else if y > hi {
            let t = ((y - hi) / self.xi).min(1.0);
            hi + self.xi * (t - smoothstep_integral(t))
        } else {
            let t = ((lo - y) / self.xi).min(1.0);
            lo - self.xi * (t - smoothstep_integral(t))
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        let (lo, hi) = (self.lower_inner(), self.upper_inner());
        if y >= lo && y <= hi {
            1.0
        } else if y >= self.y_max || y <= self.y_min {
            0.0
        } else if y > hi {
            1.0 - smoothstep((y - hi) / self.xi)
        } else {
            1.0 - smoothstep((lo - y) / self.xi)
        }
    }

    pub fn second_derivative(&self, y: f64) -> f64 {
        let (lo, hi) = (self.lower_inner(), self.upper_inner());
        if (y >= lo && y <= hi) || y >= self.y_max || y <= self.y_min {
            0.0
        } else if y > hi {
            -smoothstep_prime((y - hi) / self.xi) / self.xi
        } else {
            smoothstep_prime((lo - y) / self.xi) / self.xi
        }
    }

    /// Plateau values `(f(-∞), f(+∞))`.
    pub fn plateaus(&self) -> (f64, f64) {
        (self.y_min + 0.5 * self.xi, self.y_max - 0.5 * self.xi)
    }
}

/// Value and first derivative of the smooth cutoff at `y`.
pub fn smooth_cutoff(y: f64, y_min: f64, y_max: f64, xi: f64) -> Result<(f64, f64)> {
    let c = SmoothCutoff::new(y_min, y_max, xi)?;
    Ok((c.value(y), c.derivative(y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const Y_BAR: f64 = 0.056;

    fn cutoff() -> SmoothCutoff {
        SmoothCutoff::symmetric(Y_BAR, 0.15, 0.02).unwrap()
    }

    #[test]
    fn identity_in_interior() {
        assert_eq!(smooth_cutoff(Y_BAR, -0.094, 0.206, 0.02).unwrap(), (Y_BAR, 1.0));
    }

    #[test]
    fn plateau_beyond_support() {
        let c = cutoff();
        let (v, d) = (c.value(c.y_max + 1.0), c.derivative(c.y_max + 1.0));
        assert_eq!(d, 0.0);
        assert!((v - (c.y_max - 0.5 * c.xi)).abs() < 1e-15);
        assert!((c.value(c.y_min - 1.0) - (c.y_min + 0.5 * c.xi)).abs() < 1e-15);
    }

    #[test]
    fn mid_band_value() {
        // t = 1/2: S = 1/2 and ∫S = 5/64, so f = y_max − ξ + ξ(1/2 − 5/64).
        let c = cutoff();
        let y = c.y_max - 0.5 * c.xi;
        assert!((c.derivative(y) - 0.5).abs() < 1e-12);
        let expected = c.y_max - c.xi + c.xi * (0.5 - 5.0 / 64.0);
        assert!((c.value(y) - expected).abs() < 1e-14);
    }

    #[test]
    fn finite_differences_match_derivatives() {
        let c = cutoff();
        let h = 1e-6;
        let n = 4000;
        let (a, b) = (c.y_min - 0.05, c.y_max + 0.05);
        for i in 0..=n {
            let y = a + (b - a) * i as f64 / n as f64;
            let fd1 = (c.value(y + h) - c.value(y - h)) / (2.0 * h);
            assert!((fd1 - c.derivative(y)).abs() < 1e-6, "f' at {y}");
            let fd2 = (c.derivative(y + h) - c.derivative(y - h)) / (2.0 * h);
            assert!((fd2 - c.second_derivative(y)).abs() < 1e-4, "f'' at {y}");
            // second differences of f stay bounded (C² transition)
            let dd = (c.value(y + h) - 2.0 * c.value(y) + c.value(y - h)) / (h * h);
            assert!(dd.abs() < 2.0 / c.xi, "second difference {dd} at {y}");
        }
    }

    #[test]
    fn second_derivative_continuous_at_joins() {
        let c = cutoff();
        for y in [c.y_min, c.y_min + c.xi, c.y_max - c.xi, c.y_max] {
            for off in [-1e-9, 1e-9] {
                assert!(c.second_derivative(y + off).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn odd_about_center() {
        let c = cutoff();
        for i in 0..=400 {
            let h = 0.3 * i as f64 / 400.0;
            let up = c.value(Y_BAR + h) - Y_BAR;
            let down = c.value(Y_BAR - h) - Y_BAR;
            assert!((up + down).abs() < 1e-12, "h = {h}");
        }
    }

    #[test]
    fn monotone_and_derivative_bounded() {
        let c = cutoff();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=2000 {
            let y = -0.3 + 0.7 * i as f64 / 2000.0;
            let v = c.value(y);
            assert!(v >= prev);
            prev = v;
            let d = c.derivative(y);
            assert!((0.0..=1.0).contains(&d));
            if (y > c.y_min && y < c.y_min + c.xi) || (y > c.y_max - c.xi && y < c.y_max) {
                assert!(d > 0.0 && d < 1.0);
            }
        }
    }

    #[test]
    fn rejects_bad_width() {
        assert!(matches!(smooth_cutoff(0.0, -1.0, 1.0, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(smooth_cutoff(0.0, -1.0, 1.0, -0.1), Err(Error::Parameter(_))));
        assert!(SmoothCutoff::new(0.0, 0.1, 0.06).is_err());
    }
}
