//! Time-energy characteristic times and resource estimates.
//!
//! All times are in units with ħ = 1; restoring ħ multiplies every time by ħ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::golden_section_min;
use crate::schedule::{adaptive_simpson, Schedule};
use crate::sparse::{inner, norm, SparseOperator};
use crate::Complex64;

/// Expectation and spread of a Hamiltonian in a fixed state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyMoments {
    pub energy: f64,
    /// `√(⟨H²⟩ − ⟨H⟩²)`, evaluated as `‖(H − ⟨H⟩)ψ‖`.
    pub spread: f64,
}

pub fn energy_moments(psi: &[Complex64], h: &SparseOperator) -> Result<EnergyMoments> {
    if psi.len() != h.dim() {
        return Err(Error::DimensionMismatch { left: h.dim(), right: psi.len() });
    }
    let n = norm(psi);
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(n));
    }
    let hpsi = h.apply(psi);
    let energy = inner(psi, &hpsi).re;
    let residual: Vec<Complex64> = hpsi.iter().zip(psi).map(|(a, b)| a - b * energy).collect();
    Ok(EnergyMoments { energy, spread: norm(&residual) })
}

/// Lower limits on the run time of `f H_I + g H_P` from a state with zero
/// initial energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicTimes {
    /// Below this some dynamically allowed state is unreachable.
    pub t_forall: f64,
    /// Below this no orthogonal state is reachable.
    pub t_perp: f64,
    pub g_integral: f64,
    /// `true` when the spread vanishes and `t_perp` is infinite.
    pub orthogonal_unreachable: bool,
}

/// `T_∀ = 2ħ / (∫g · √(ΔE² + E²))`, `T_⊥ = √2 ħ / (∫g · ΔE)`.
pub fn characteristic_times(moments: &EnergyMoments, schedule: &Schedule) -> CharacteristicTimes {
    characteristic_times_with(moments, schedule.g_integral())
}

pub fn characteristic_times_with(moments: &EnergyMoments, g_integral: f64) -> CharacteristicTimes {
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::INFINITY };
    let t_forall = ratio(2.0, g_integral * moments.spread.hypot(moments.energy));
    let t_perp = ratio(2f64.sqrt(), g_integral * moments.spread);
    CharacteristicTimes { t_forall, t_perp, g_integral, orthogonal_unreachable: t_perp.is_infinite() }
}

/// Order-of-magnitude resource estimates with unit prefactors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TspEstimates {
    /// `s √((N−1)!) |θ|^N`.
    pub spread: f64,
    /// `s (N−1)! |θ|^{2N}`.
    pub energy: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn tsp_estimates(n_cities: usize, theta: f64, s: f64) -> TspEstimates {
    if theta.abs() > 0.5 {
        log::warn!("|theta| = {} is outside the small-theta regime of the estimates", theta.abs());
    }
    let tours = factorial(n_cities - 1);
    let t = theta.abs();
    TspEstimates { spread: s * tours.sqrt() * t.powi(n_cities as i32), energy: s * tours * t.powi(2 * n_cities as i32) }
}

/// Positive root of `(N−1)! |θ|^{2N} = 1`.
pub fn theta_for_unit_resource(n_cities: usize) -> f64 {
    factorial(n_cities - 1).powf(-1.0 / (2.0 * n_cities as f64))
}

/// `max_τ ⟨ψ|f(τ) H_I + g(τ) H_P|ψ⟩` and the τ where it occurs. Independent
/// of the run duration since only `τ = t/T` enters.
pub fn max_initial_energy(
    psi: &[Complex64],
    h_i: &SparseOperator,
    h_p: &SparseOperator,
    schedule: &Schedule,
) -> Result<(f64, f64)> {
    let ei = energy_moments(psi, h_i)?.energy;
    let ep = energy_moments(psi, h_p)?.energy;
    Ok(max_of_energy_curve(|tau| schedule.f(tau) * ei + schedule.g(tau) * ep))
}

/// Dense scan of `[0, 1]` followed by golden-section refinement.
pub fn max_of_energy_curve(e: impl Fn(f64) -> f64) -> (f64, f64) {
    const SCAN: usize = 2000;
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..=SCAN {
        let v = e(i as f64 / SCAN as f64);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut tau = best_i as f64 / SCAN as f64;
    if best_i > 0 && best_i < SCAN {
        let lo = (best_i - 1) as f64 / SCAN as f64;
        let hi = (best_i + 1) as f64 / SCAN as f64;
        let (t, v) = golden_section_min(&|x| Ok(-e(x)), lo, hi, 1e-10).expect("closure is infallible");
        if -v > best {
            best = -v;
            tau = t;
        }
    }
    (best, tau)
}

/// Evaluation of the schedule-free integral conditions for a run of length `T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralBounds {
    pub duration: f64,
    /// `∫₀^T ‖H(t/T) ψ₀‖ dt`.
    pub forall_integral: f64,
    /// `∫₀^T ‖(H(t/T) − β(t/T)) ψ₀‖ dt`.
    pub perp_integral: f64,
    /// Whether `forall_integral ≥ 2ħ`.
    pub forall_met: bool,
    /// Whether `perp_integral ≥ √2 ħ`.
    pub perp_met: bool,
    /// Smallest duration meeting each threshold.
    pub min_duration_forall: f64,
    pub min_duration_perp: f64,
}

/// Shift used inside the orthogonality integral.
pub enum Beta<'a> {
    /// `⟨ψ₀|H(τ)|ψ₀⟩`, the pointwise minimizer over constant shifts.
    InstantaneousMean,
    Custom(&'a dyn Fn(f64) -> f64),
}

/// Both integral conditions for `H(τ) = f(τ) H_I + g(τ) H_P`.
///
/// With `t = τT` each integral is `T` times a τ-integral over `[0, 1]`, so the
/// minimal durations follow by division.
pub fn general_integral_bounds(
    h_i: &SparseOperator,
    h_p: &SparseOperator,
    schedule: &Schedule,
    psi0: &[Complex64],
    beta: Beta<'_>,
    duration: f64,
) -> Result<IntegralBounds> {
    let n = norm(psi0);
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(n));
    }
    let a = h_i.apply(psi0);
    let b = h_p.apply(psi0);
    let (ei, ep) = (inner(psi0, &a).re, inner(psi0, &b).re);
    let shifted_norm = |tau: f64, shift: f64| {
        let (f, g) = (schedule.f(tau), schedule.g(tau));
        a.iter()
            .zip(&b)
            .zip(psi0)
            .map(|((x, y), p)| (x * f + y * g - p * shift).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let beta_at = |tau: f64| match &beta {
        Beta::InstantaneousMean => schedule.f(tau) * ei + schedule.g(tau) * ep,
        Beta::Custom(func) => func(tau),
    };
    let knots: Vec<f64> = match schedule {
        Schedule::Tabulated { tau, .. } => tau.clone(),
        _ => vec![0.0, 1.0],
    };
    let integrate = |func: &dyn Fn(f64) -> f64| -> f64 {
        knots.windows(2).map(|w| adaptive_simpson(func, w[0], w[1], 1e-12)).sum()
    };
    let unit_forall = integrate(&|tau| shifted_norm(tau, 0.0));
    let unit_perp = integrate(&|tau| shifted_norm(tau, beta_at(tau)));
    let min_t = |thresh: f64, unit: f64| if unit > 0.0 { thresh / unit } else { f64::INFINITY };
    Ok(IntegralBounds {
        duration,
        forall_integral: unit_forall * duration,
        perp_integral: unit_perp * duration,
        forall_met: unit_forall * duration >= 2.0,
        perp_met: unit_perp * duration >= 2f64.sqrt(),
        min_duration_forall: min_t(2.0, unit_forall),
        min_duration_perp: min_t(2f64.sqrt(), unit_perp),
    })
}

/// Scalar bound evaluations for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub t_forall: f64,
    pub t_perp: f64,
    pub g_integral: f64,
    pub energy_expectation: f64,
    pub spread: f64,
    pub max_initial_energy: f64,
    pub max_initial_energy_tau: f64,
    pub estimate_spread: Option<f64>,
    pub estimate_energy: Option<f64>,
    /// `∫g · estimate_energy`, the run-energy estimate including the schedule.
    pub estimate_energy_with_g: Option<f64>,
    pub theta_star: Option<f64>,
}

impl BoundsReport {
    pub fn new(
        moments: &EnergyMoments,
        schedule: &Schedule,
        max_initial_energy: (f64, f64),
        estimates: Option<TspEstimates>,
        theta_star: Option<f64>,
    ) -> Self {
        let times = characteristic_times(moments, schedule);
        Self {
            t_forall: times.t_forall,
            t_perp: times.t_perp,
            g_integral: times.g_integral,
            energy_expectation: moments.energy,
            spread: moments.spread,
            max_initial_energy: max_initial_energy.0,
            max_initial_energy_tau: max_initial_energy.1,
            estimate_spread: estimates.map(|e| e.spread),
            estimate_energy: estimates.map(|e| e.energy),
            estimate_energy_with_g: estimates.map(|e| e.energy * times.g_integral),
            theta_star,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn uniform_search(m: usize) -> (SparseOperator, SparseOperator, Vec<Complex64>) {
        let amp = 1.0 / (m as f64).sqrt();
        let phi: Vec<Complex64> = vec![c(amp); m];
        let mut t0 = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let id = if i == j { 1.0 } else { 0.0 };
                t0.push((i, j, c(id - amp * amp)));
            }
        }
        let h0 = SparseOperator::from_triplets(m, &t0).unwrap();
        let mut d = vec![1.0; m];
        d[0] = 0.0;
        (h0, SparseOperator::from_real_diagonal(&d), phi)
    }

    #[test]
    fn eigenstate_has_no_spread() {
        let h = SparseOperator::from_real_diagonal(&[1.0, 2.0]);
        let m = energy_moments(&[c(0.0), c(1.0)], &h).unwrap();
        assert_eq!(m, EnergyMoments { energy: 2.0, spread: 0.0 });
        let t = characteristic_times(&m, &Schedule::Linear);
        assert!(t.t_perp.is_infinite() && t.orthogonal_unreachable);
    }

    #[test]
    fn uniform_search_moments_and_times() {
        let (_, hf, phi) = uniform_search(4);
        let m = energy_moments(&phi, &hf).unwrap();
        assert!((m.energy - 0.75).abs() < 1e-12);
        assert!((m.spread - 3f64.sqrt() / 4.0).abs() < 1e-12);
        let t = characteristic_times(&m, &Schedule::Linear);
        assert!((t.t_perp - 2f64.sqrt() / (0.5 * 3f64.sqrt() / 4.0)).abs() < 1e-12);
        assert!((t.t_perp - 6.532).abs() < 1e-3);
        assert!((t.t_forall - 2.0 / (0.5 * (m.spread.powi(2) + 0.5625).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn estimates_and_identity() {
        let e = tsp_estimates(3, 0.1, 3.0);
        assert!((e.spread - 3.0 * 2f64.sqrt() * 1e-3).abs() < 1e-15);
        assert!((e.energy / e.spread - 2f64.sqrt() * 1e-3).abs() < 1e-15);
    }

    #[test]
    fn theta_star_values() {
        assert_eq!(theta_for_unit_resource(2), 1.0);
        assert!((theta_for_unit_resource(3) - 2f64.powf(-1.0 / 6.0)).abs() < 1e-15);
        assert!((theta_for_unit_resource(3) - 0.8909).abs() < 1e-4);
        assert!((theta_for_unit_resource(4) - 6f64.powf(-1.0 / 8.0)).abs() < 1e-15);
        for n in 2..=12 {
            let th = theta_for_unit_resource(n);
            assert!((factorial(n - 1) * th.powi(2 * n as i32) - 1.0).abs() < 1e-12, "{n}");
        }
    }

    #[test]
    fn linear_search_max_energy_at_end() {
        let (h0, hf, phi) = uniform_search(8);
        let (e, tau) = max_initial_energy(&phi, &h0, &hf, &Schedule::Linear).unwrap();
        assert!((e - 7.0 / 8.0).abs() < 1e-12 && tau == 1.0);
    }

    #[test]
    fn orthogonality_integral_reduces_to_characteristic_time() {
        // H_I φ = 0, so ‖(H − β)φ‖ = g ΔE and the minimal duration is T_⊥
        let (h0, hf, phi) = uniform_search(4);
        for schedule in [Schedule::Linear, Schedule::QuadraticBoost { k: 2.0 }, Schedule::Scaled { k: 3.0 }] {
            let b = general_integral_bounds(&h0, &hf, &schedule, &phi, Beta::InstantaneousMean, 10.0).unwrap();
            let m = energy_moments(&phi, &hf).unwrap();
            let t = characteristic_times(&m, &schedule);
            assert!((b.min_duration_perp - t.t_perp).abs() < 1e-6 * t.t_perp, "{}", schedule.label());
            assert_eq!(b.perp_met, 10.0 >= t.t_perp);
        }
    }

    #[test]
    fn mean_shift_minimizes_integrand() {
        let (h0, hf, phi) = uniform_search(4);
        let mean = general_integral_bounds(&h0, &hf, &Schedule::Linear, &phi, Beta::InstantaneousMean, 1.0).unwrap();
        for shift in [-0.5, 0.0, 0.2, 0.9] {
            let f = move |tau: f64| tau * 0.75 + shift;
            let other = general_integral_bounds(&h0, &hf, &Schedule::Linear, &phi, Beta::Custom(&f), 1.0).unwrap();
            assert!(other.perp_integral >= mean.perp_integral - 1e-12);
        }
    }

    #[test]
    fn doubling_spread_halves_minimal_duration() {
        let (h0, hf, phi) = uniform_search(4);
        let one = general_integral_bounds(&h0, &hf, &Schedule::Linear, &phi, Beta::InstantaneousMean, 1.0).unwrap();
        let two = general_integral_bounds(&h0.scale_real(2.0), &hf.scale_real(2.0), &Schedule::Linear, &phi, Beta::InstantaneousMean, 1.0)
            .unwrap();
        assert!((one.min_duration_perp / two.min_duration_perp - 2.0).abs() < 1e-9);
    }
}
