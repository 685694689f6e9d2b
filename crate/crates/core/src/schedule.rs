//! Interpolation functions `f`, `g` for `H(τ) = f(τ) H_I + g(τ) H_P`, `τ = t/T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Schedule family. Every built-in kind keeps `f(τ) = 1 − τ`; the boosted
/// kinds rescale `g` only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `g(τ) = τ`.
    Linear,
    /// `g(τ) = K τ`.
    Scaled { k: f64 },
    /// `g(τ) = τ + K τ (1 − τ)`.
    QuadraticBoost { k: f64 },
    /// `g(τ) = K τ`, usually with `K = e^M`.
    ExponentialBoost { k: f64 },
    /// Continuous piecewise-linear `f` and `g` through the given knots.
    Tabulated { tau: Vec<f64>, f: Vec<f64>, g: Vec<f64> },
}

impl Schedule {
    pub fn exponential_boost(m: f64) -> Self {
        Schedule::ExponentialBoost { k: m.exp() }
    }

    /// Constant coefficients for all τ.
    pub fn frozen(f: f64, g: f64) -> Self {
        Schedule::Tabulated { tau: vec![0.0, 1.0], f: vec![f, f], g: vec![g, g] }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |k: f64| k.is_finite() && k >= 0.0;
        match self {
            Schedule::Linear => Ok(()),
            Schedule::Scaled { k } | Schedule::QuadraticBoost { k } | Schedule::ExponentialBoost { k } => {
                if finite_nonneg(*k) {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!("schedule factor K = {k} must be finite and >= 0")))
                }
            }
            Schedule::Tabulated { tau, f, g } => {
                if tau.len() < 2 || f.len() != tau.len() || g.len() != tau.len() {
                    return Err(Error::InvalidArgument(
                        "tabulated schedule needs >= 2 knots and equal-length tau, f, g".into(),
                    ));
                }
                if tau[0] != 0.0 || *tau.last().unwrap() != 1.0 {
                    return Err(Error::InvalidArgument("tabulated knots must start at 0 and end at 1".into()));
                }
                if tau.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidArgument("tabulated knots must be strictly increasing".into()));
                }
                if g.iter().any(|&v| !finite_nonneg(v)) || f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("tabulated g must be finite and >= 0".into()));
                }
                Ok(())
            }
        }
    }

    pub fn f(&self, tau: f64) -> f64 {
        match self {
            Schedule::Tabulated { tau: knots, f, .. } => interpolate(knots, f, tau),
            _ => 1.0 - tau,
        }
    }

    pub fn g(&self, tau: f64) -> f64 {
        match self {
            Schedule::Linear => tau,
            Schedule::Scaled { k } | Schedule::ExponentialBoost { k } => k * tau,
            Schedule::QuadraticBoost { k } => tau + k * tau * (1.0 - tau),
            Schedule::Tabulated { tau: knots, g, .. } => interpolate(knots, g, tau),
        }
    }

    /// `∫₀¹ g(τ) dτ`, exact for every kind.
    pub fn g_integral(&self) -> f64 {
        match self {
            Schedule::Linear => 0.5,
            Schedule::Scaled { k } | Schedule::ExponentialBoost { k } => 0.5 * k,
            Schedule::QuadraticBoost { k } => 0.5 + k / 6.0,
            Schedule::Tabulated { tau, g, .. } => tau
                .windows(2)
                .zip(g.windows(2))
                .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
                .sum(),
        }
    }

    /// `∫₀¹ g(τ) dτ` by adaptive Simpson quadrature.
    pub fn g_integral_quadrature(&self, tolerance: f64) -> f64 {
        match self {
            // integrate knot to knot so kinks never sit inside a panel
            Schedule::Tabulated { tau, .. } => tau
                .windows(2)
                .map(|w| adaptive_simpson(&|x| self.g(x), w[0], w[1], tolerance))
                .sum(),
            _ => adaptive_simpson(&|x| self.g(x), 0.0, 1.0, tolerance),
        }
    }

    /// Short name used in tables.
    pub fn label(&self) -> String {
        match self {
            Schedule::Linear => "linear".into(),
            Schedule::Scaled { k } => format!("scaled({k})"),
            Schedule::QuadraticBoost { k } => format!("quadratic_boost({k})"),
            Schedule::ExponentialBoost { k } => format!("exponential_boost({k})"),
            Schedule::Tabulated { tau, .. } => format!("tabulated({} knots)", tau.len()),
        }
    }
}

fn interpolate(knots: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= knots[0] {
        return values[0];
    }
    let last = knots.len() - 1;
    if x >= knots[last] {
        return values[last];
    }
    let i = knots.partition_point(|&k| k <= x) - 1;
    let w = (x - knots[i]) / (knots[i + 1] - knots[i]);
    values[i] * (1.0 - w) + values[i + 1] * w
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tolerance: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tolerance, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tolerance: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tolerance {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tolerance, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tolerance, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_of_builtin_kinds() {
        for s in [
            Schedule::Linear,
            Schedule::Scaled { k: 3.0 },
            Schedule::QuadraticBoost { k: 2.0 },
            Schedule::exponential_boost(2.0),
        ] {
            assert_eq!(s.f(0.0), 1.0);
            assert_eq!(s.f(1.0), 0.0);
            assert_eq!(s.g(0.0), 0.0);
        }
        assert_eq!(Schedule::Linear.g(1.0), 1.0);
        assert_eq!(Schedule::QuadraticBoost { k: 5.0 }.g(1.0), 1.0);
    }

    #[test]
    fn linear_keeps_unit_sum() {
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert!((Schedule::Linear.f(t) + Schedule::Linear.g(t) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_forms_match_quadrature() {
        let kinds = [
            Schedule::Linear,
            Schedule::Scaled { k: 2.0 },
            Schedule::QuadraticBoost { k: 2.0 },
            Schedule::QuadraticBoost { k: 8.0 },
            Schedule::exponential_boost(3.0),
            Schedule::Tabulated { tau: vec![0.0, 0.3, 1.0], f: vec![1.0, 0.5, 0.0], g: vec![0.0, 0.9, 1.0] },
        ];
        for s in kinds {
            let q = s.g_integral_quadrature(1e-13);
            assert!((q - s.g_integral()).abs() < 1e-10, "{}: {q} vs {}", s.label(), s.g_integral());
        }
        assert_eq!(Schedule::Linear.g_integral(), 0.5);
    }

    #[test]
    fn quadratic_boost_integral() {
        // ∫τ = 1/2, ∫τ(1−τ) = 1/6
        let s = Schedule::QuadraticBoost { k: 2.0 };
        assert!((s.g_integral() - (0.5 + 2.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn tabulated_interpolates_and_validates() {
        let s = Schedule::Tabulated { tau: vec![0.0, 0.5, 1.0], f: vec![1.0, 0.2, 0.0], g: vec![0.0, 0.4, 1.0] };
        s.validate().unwrap();
        assert!((s.g(0.25) - 0.2).abs() < 1e-15);
        assert!((s.f(0.75) - 0.1).abs() < 1e-15);
        let bad = Schedule::Tabulated { tau: vec![0.0, 0.5], f: vec![1.0, 0.0], g: vec![0.0, 1.0] };
        assert!(bad.validate().is_err());
        assert!(Schedule::Scaled { k: -1.0 }.validate().is_err());
    }

    #[test]
    fn frozen_is_constant() {
        let s = Schedule::frozen(0.3, 0.7);
        assert!((s.f(0.1) - 0.3).abs() < 1e-15);
        assert!((s.g(0.9) - 0.7).abs() < 1e-15);
    }
}
