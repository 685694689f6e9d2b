//! Propagation of `i ∂ψ/∂t = (f(t/T) H_I + g(t/T) H_P) ψ`, spectral flow and
//! success probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm_krylov, lowest_eigenpairs, Combination, KrylovOptions, LanczosOptions};
use crate::schedule::Schedule;
use crate::sparse::{inner, norm, SparseOperator};
use crate::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Time-stepping scheme; both freeze the Hamiltonian over each step and apply
/// the exact (Krylov) exponential, so norm is preserved to solver tolerance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    /// `exp(−i dt H(t + dt/2))`, second order.
    Midpoint,
    /// Two-exponential commutator-free Magnus scheme on Gauss nodes, fourth order.
    #[default]
    Magnus4,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub dt: f64,
    /// Record a sample every `sample_stride` steps (and always at the end).
    pub sample_stride: usize,
    pub unitarity_tolerance: f64,
    pub stepper: Stepper,
    pub krylov_tolerance: f64,
    pub krylov_dimension: usize,
}

impl EvolveOptions {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt: 0.05,
            sample_stride: 1,
            unitarity_tolerance: 1e-8,
            stepper: Stepper::Magnus4,
            krylov_tolerance: 1e-13,
            krylov_dimension: 40,
        }
    }
}

/// Orthonormal set spanning a target subspace.
#[derive(Clone, Debug)]
pub struct Projector {
    vectors: Vec<Vec<Complex64>>,
}

impl Projector {
    /// Fails unless the vectors are orthonormal within `1e-10`, i.e. unless
    /// `P = Σ |v⟩⟨v|` is idempotent.
    pub fn from_vectors(vectors: Vec<Vec<Complex64>>) -> Result<Self> {
        let mut worst = 0.0f64;
        for (a, va) in vectors.iter().enumerate() {
            for (b, vb) in vectors.iter().enumerate() {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((inner(va, vb) - target).norm());
            }
        }
        if worst > 1e-10 {
            return Err(Error::NotProjector(worst));
        }
        Ok(Self { vectors })
    }

    /// Projector onto the span of basis vectors `indices`.
    pub fn from_indices(dim: usize, indices: &[usize]) -> Result<Self> {
        let vectors = indices
            .iter()
            .map(|&i| {
                let mut v = vec![ZERO; dim];
                v[i] = Complex64::new(1.0, 0.0);
                v
            })
            .collect();
        Self::from_vectors(vectors)
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<Complex64>] {
        &self.vectors
    }

    /// `P ψ`.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; psi.len()];
        for v in &self.vectors {
            let c = inner(v, psi);
            for (o, x) in out.iter_mut().zip(v) {
                *o += x * c;
            }
        }
        out
    }

    /// `Σ |⟨v|ψ⟩|²`.
    pub fn overlap_sum(&self, psi: &[Complex64]) -> f64 {
        self.vectors.iter().map(|v| inner(v, psi).norm_sqr()).sum()
    }
}

/// Sampled traces of one run.
#[derive(Clone, Debug, Serialize)]
pub struct EvolutionResult {
    pub total_time: f64,
    pub dt: f64,
    pub steps: usize,
    pub times: Vec<f64>,
    /// `⟨ψ(0)|ψ(t)⟩`.
    pub survival: Vec<Complex64>,
    /// `‖P ψ(t)‖²` when a target projector was supplied.
    pub target_probability: Option<Vec<f64>>,
    /// `⟨ψ(t)|H(t)|ψ(t)⟩`.
    pub energy: Vec<f64>,
    /// `⟨ψ(0)|H(t)|ψ(0)⟩`.
    pub initial_energy: Vec<f64>,
    pub max_initial_energy: f64,
    /// `|‖ψ(t)‖ − 1|`.
    pub unitarity_drift: Vec<f64>,
    pub max_unitarity_drift: f64,
    #[serde(skip)]
    pub final_state: Vec<Complex64>,
}

impl EvolutionResult {
    pub fn survival_probability(&self) -> Vec<f64> {
        self.survival.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn final_target_probability(&self) -> Option<f64> {
        self.target_probability.as_ref().and_then(|p| p.last().copied())
    }
}

fn check_pair(h_i: &SparseOperator, h_p: &SparseOperator, psi0: &[Complex64]) -> Result<()> {
    if h_i.dim() != h_p.dim() {
        return Err(Error::DimensionMismatch { left: h_i.dim(), right: h_p.dim() });
    }
    if psi0.len() != h_i.dim() {
        return Err(Error::DimensionMismatch { left: h_i.dim(), right: psi0.len() });
    }
    let n = norm(psi0);
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(n));
    }
    Ok(())
}

/// Propagates `psi0` over `[0, total_time]`.
pub fn evolve(
    h_i: &SparseOperator,
    h_p: &SparseOperator,
    schedule: &Schedule,
    total_time: f64,
    psi0: &[Complex64],
    target: Option<&Projector>,
    options: &EvolveOptions,
) -> Result<EvolutionResult> {
    check_pair(h_i, h_p, psi0)?;
    schedule.validate()?;
    if !(total_time >= 0.0 && total_time.is_finite()) {
        return Err(Error::InvalidArgument(format!("duration T = {total_time} must be finite and >= 0")));
    }
    if !(options.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step dt = {} must be positive", options.dt)));
    }
    let krylov = KrylovOptions { tolerance: options.krylov_tolerance, max_dimension: options.krylov_dimension };
    let stride = options.sample_stride.max(1);
    let ei = h_i.expectation(psi0).re;
    let ep = h_p.expectation(psi0).re;
    let coeffs = |t: f64| {
        if total_time == 0.0 {
            (schedule.f(0.0), schedule.g(0.0))
        } else {
            let tau = (t / total_time).clamp(0.0, 1.0);
            (schedule.f(tau), schedule.g(tau))
        }
    };

    let steps = if total_time == 0.0 { 0 } else { ((total_time / options.dt) - 1e-9).ceil().max(1.0) as usize };
    let mut result = EvolutionResult {
        total_time,
        dt: options.dt,
        steps,
        times: Vec::new(),
        survival: Vec::new(),
        target_probability: target.map(|_| Vec::new()),
        energy: Vec::new(),
        initial_energy: Vec::new(),
        max_initial_energy: f64::NEG_INFINITY,
        unitarity_drift: Vec::new(),
        max_unitarity_drift: 0.0,
        final_state: Vec::new(),
    };
    let mut psi = psi0.to_vec();
    let record = |t: f64, psi: &[Complex64], result: &mut EvolutionResult| -> Result<()> {
        let (f, g) = coeffs(t);
        let drift = (norm(psi) - 1.0).abs();
        result.times.push(t);
        result.survival.push(inner(psi0, psi));
        if let (Some(p), Some(trace)) = (target, result.target_probability.as_mut()) {
            trace.push(p.overlap_sum(psi));
        }
        result.energy.push(f * h_i.expectation(psi).re + g * h_p.expectation(psi).re);
        let e0 = f * ei + g * ep;
        result.initial_energy.push(e0);
        result.max_initial_energy = result.max_initial_energy.max(e0);
        result.unitarity_drift.push(drift);
        result.max_unitarity_drift = result.max_unitarity_drift.max(drift);
        if drift > options.unitarity_tolerance {
            return Err(Error::UnitarityDrift { drift, tolerance: options.unitarity_tolerance, dt: options.dt });
        }
        Ok(())
    };
    record(0.0, &psi, &mut result)?;
    let mut t = 0.0;
    for step in 0..steps {
        let h = if step + 1 == steps { total_time - t } else { options.dt };
        match options.stepper {
            Stepper::Midpoint => {
                let (f, g) = coeffs(t + 0.5 * h);
                let op = Combination::new(vec![(f, h_i), (g, h_p)])?;
                psi = expm_krylov(&op, &psi, h, &krylov)?;
            }
            Stepper::Magnus4 => {
                let s3 = 3f64.sqrt();
                let (a1, a2) = ((3.0 - 2.0 * s3) / 12.0, (3.0 + 2.0 * s3) / 12.0);
                let (f1, g1) = coeffs(t + (0.5 - s3 / 6.0) * h);
                let (f2, g2) = coeffs(t + (0.5 + s3 / 6.0) * h);
                let first = Combination::new(vec![(a2 * f1 + a1 * f2, h_i), (a2 * g1 + a1 * g2, h_p)])?;
                psi = expm_krylov(&first, &psi, h, &krylov)?;
                let second = Combination::new(vec![(a1 * f1 + a2 * f2, h_i), (a1 * g1 + a2 * g2, h_p)])?;
                psi = expm_krylov(&second, &psi, h, &krylov)?;
            }
        }
        t = if step + 1 == steps { total_time } else { t + h };
        if (step + 1) % stride == 0 || step + 1 == steps {
            record(t, &psi, &mut result)?;
        }
    }
    result.final_state = psi;
    Ok(result)
}

/// `‖P ψ(T)‖²`.
pub fn success_probability(result: &EvolutionResult, projector: &Projector) -> f64 {
    norm(&projector.apply(&result.final_state)).powi(2)
}

/// Earliest sampled time with `|⟨ψ(0)|ψ(t)⟩| ≤ tol`, interpolated linearly in
/// `|⟨ψ(0)|ψ(t)⟩|` between neighbouring samples.
pub fn first_orthogonal_time(result: &EvolutionResult, tol: f64) -> Option<f64> {
    let amps: Vec<f64> = result.survival.iter().map(|c| c.norm()).collect();
    if amps.first().is_some_and(|&a| a <= tol) {
        return result.times.first().copied();
    }
    for k in 1..amps.len() {
        if amps[k] <= tol {
            let (a0, a1) = (amps[k - 1], amps[k]);
            let (t0, t1) = (result.times[k - 1], result.times[k]);
            let w = if a0 == a1 { 1.0 } else { (a0 - tol) / (a0 - a1) };
            return Some(t0 + w * (t1 - t0));
        }
    }
    None
}

/// Lowest eigenvalues of `H(τ)` along a τ grid.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralFlow {
    pub tau: Vec<f64>,
    pub eigenvalues: Vec<Vec<f64>>,
    /// `e_1 − e_0`, except at τ = 1 where it is `e_d − e_0` with `d` the
    /// ground multiplicity.
    pub gaps: Vec<f64>,
    pub min_gap: f64,
    pub min_gap_tau: f64,
    pub final_ground_multiplicity: usize,
}

/// Relative tolerance for counting degenerate levels.
pub const DEGENERACY_TOLERANCE: f64 = 1e-8;

fn lowest_levels(
    h_i: &SparseOperator,
    h_p: &SparseOperator,
    schedule: &Schedule,
    tau: f64,
    k: usize,
    options: &LanczosOptions,
) -> Result<Vec<f64>> {
    let op = Combination::new(vec![(schedule.f(tau), h_i), (schedule.g(tau), h_p)])?;
    Ok(lowest_eigenpairs(&op, k, options)?.values)
}

fn plain_gap(values: &[f64]) -> f64 {
    values[1] - values[0]
}

fn degenerate_gap(values: &[f64]) -> (f64, usize) {
    let tol = DEGENERACY_TOLERANCE * values[0].abs().max(1.0);
    let d = values.iter().take_while(|&&v| v - values[0] <= tol).count();
    match values.get(d) {
        Some(v) => (v - values[0], d),
        // every computed level is degenerate; the gap is not resolved
        None => (f64::INFINITY, d),
    }
}

/// Lowest `k` levels of `f(τ) H_I + g(τ) H_P` on `n_samples` uniform τ points
/// in `[0, 1]`, with golden-section refinement of the smallest gap.
pub fn spectral_flow(
    h_i: &SparseOperator,
    h_p: &SparseOperator,
    schedule: &Schedule,
    n_samples: usize,
    k: usize,
    options: &LanczosOptions,
) -> Result<SpectralFlow> {
    if k < 2 {
        return Err(Error::InvalidArgument("spectral flow needs k >= 2 levels".into()));
    }
    if n_samples < 2 {
        return Err(Error::InvalidArgument("spectral flow needs at least 2 samples".into()));
    }
    if h_i.dim() != h_p.dim() {
        return Err(Error::DimensionMismatch { left: h_i.dim(), right: h_p.dim() });
    }
    schedule.validate()?;
    let tau: Vec<f64> = (0..n_samples).map(|i| i as f64 / (n_samples - 1) as f64).collect();
    let eigenvalues =
        tau.iter().map(|&t| lowest_levels(h_i, h_p, schedule, t, k, options)).collect::<Result<Vec<_>>>()?;
    let last = n_samples - 1;
    let (end_gap, multiplicity) = degenerate_gap(&eigenvalues[last]);
    let gaps: Vec<f64> =
        eigenvalues.iter().enumerate().map(|(i, v)| if i == last { end_gap } else { plain_gap(v) }).collect();
    let (mut best_i, mut min_gap) = (0, f64::INFINITY);
    for (i, &g) in gaps.iter().enumerate() {
        if g < min_gap {
            min_gap = g;
            best_i = i;
        }
    }
    let mut min_gap_tau = tau[best_i];
    if best_i > 0 && best_i < last {
        let gap_at = |t: f64| lowest_levels(h_i, h_p, schedule, t, 2, options).map(|v| plain_gap(&v));
        let (t, g) = golden_section_min(&gap_at, tau[best_i - 1], tau[best_i + 1], 1e-6)?;
        if g < min_gap {
            min_gap = g;
            min_gap_tau = t;
        }
    }
    Ok(SpectralFlow { tau, eigenvalues, gaps, min_gap, min_gap_tau, final_ground_multiplicity: multiplicity })
}

/// Minimizes `f` on `[a, b]` to an interval width of `tol`.
pub fn golden_section_min(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_hermitian_eigen;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn pair() -> (SparseOperator, SparseOperator) {
        // σ_x-like and diagonal 3-level operators
        let a = SparseOperator::from_triplets(
            3,
            &[(0, 1, c(1.0)), (1, 0, c(1.0)), (1, 2, c(0.5)), (2, 1, c(0.5)), (2, 2, c(0.3))],
        )
        .unwrap();
        let b = SparseOperator::from_real_diagonal(&[0.0, 1.0, 2.5]);
        (a, b)
    }

    #[test]
    fn stationary_eigenstate_survives() {
        let (a, _) = pair();
        let eig = dense_hermitian_eigen(a.to_dense());
        let psi0 = eig.vectors[1].clone();
        let r = evolve(&a, &a, &Schedule::Linear, 40.0, &psi0, None, &EvolveOptions::with_dt(0.1)).unwrap();
        assert!(r.survival_probability().iter().all(|p| (p - 1.0).abs() < 1e-8));
        assert!(first_orthogonal_time(&r, 1e-3).is_none());
    }

    #[test]
    fn zero_duration_returns_initial_state() {
        let (a, b) = pair();
        let psi0 = vec![c(1.0), c(0.0), c(0.0)];
        let r = evolve(&a, &b, &Schedule::Linear, 0.0, &psi0, None, &EvolveOptions::default()).unwrap();
        assert_eq!(r.steps, 0);
        assert_eq!(r.final_state, psi0);
        let tiny = evolve(&a, &b, &Schedule::Linear, 1e-10, &psi0, None, &EvolveOptions::default()).unwrap();
        assert!(tiny.final_state.iter().zip(&psi0).all(|(x, y)| (x - y).norm() < 1e-8));
    }

    #[test]
    fn frozen_schedule_conserves_energy() {
        let (a, b) = pair();
        let psi0 = vec![c(0.6), c(0.0), c(0.8)];
        let r = evolve(&a, &b, &Schedule::frozen(0.4, 0.6), 25.0, &psi0, None, &EvolveOptions::with_dt(0.05)).unwrap();
        let e0 = r.energy[0];
        assert!(r.energy.iter().all(|e| (e - e0).abs() < 1e-8));
        assert!(r.max_unitarity_drift < 1e-8);
    }

    #[test]
    fn fractional_last_step_lands_on_total_time() {
        let (a, b) = pair();
        let psi0 = vec![c(1.0), c(0.0), c(0.0)];
        let r = evolve(&a, &b, &Schedule::Linear, 1.03, &psi0, None, &EvolveOptions::with_dt(0.1)).unwrap();
        assert_eq!(r.steps, 11);
        assert_eq!(*r.times.last().unwrap(), 1.03);
    }

    #[test]
    fn magnus_and_midpoint_agree_at_small_steps() {
        let (a, b) = pair();
        let psi0 = vec![c(1.0), c(0.0), c(0.0)];
        let run = |stepper, dt| {
            let opts = EvolveOptions { dt, stepper, ..Default::default() };
            evolve(&a, &b, &Schedule::Linear, 5.0, &psi0, None, &opts).unwrap().final_state
        };
        let reference = run(Stepper::Magnus4, 0.005);
        let diff = |x: &[Complex64]| x.iter().zip(&reference).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        assert!(diff(&run(Stepper::Magnus4, 0.05)) < 1e-7);
        let coarse = diff(&run(Stepper::Midpoint, 0.05));
        let fine = diff(&run(Stepper::Midpoint, 0.025));
        assert!(fine < coarse / 3.5 && coarse < 1e-3, "{coarse} {fine}");
    }

    #[test]
    fn rejects_unnormalized_start() {
        let (a, b) = pair();
        let psi0 = vec![c(1.0), c(1.0), c(0.0)];
        assert!(matches!(
            evolve(&a, &b, &Schedule::Linear, 1.0, &psi0, None, &EvolveOptions::default()),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn projector_paths_agree() {
        let v1 = vec![c(0.6), c(0.8), c(0.0)];
        let v2 = vec![Complex64::new(0.0, 0.8), Complex64::new(0.0, -0.6), c(0.0)];
        let p = Projector::from_vectors(vec![v1.clone(), v2]).unwrap();
        let psi = vec![c(0.5), Complex64::new(0.1, 0.5), Complex64::new(0.0, 0.7)];
        let psi: Vec<_> = psi.iter().map(|x| x / norm(&psi)).collect();
        let a = norm(&p.apply(&psi)).powi(2);
        assert!((a - p.overlap_sum(&psi)).abs() < 1e-12);
        let inside = Projector::from_vectors(vec![v1.clone()]).unwrap();
        assert!((inside.overlap_sum(&v1) - 1.0).abs() < 1e-12);
        assert!(inside.overlap_sum(&[c(0.8), c(-0.6), c(0.0)]).abs() < 1e-12);
        assert!(Projector::from_vectors(vec![v1.clone(), v1]).is_err());
    }

    #[test]
    fn orthogonal_time_is_monotone_in_tolerance() {
        // two-level Rabi oscillation: |⟨0|ψ(t)⟩| = |cos t|
        let x = SparseOperator::from_triplets(2, &[(0, 1, c(1.0)), (1, 0, c(1.0))]).unwrap();
        let psi0 = vec![c(1.0), c(0.0)];
        let opts = EvolveOptions::with_dt(0.01);
        let r = evolve(&x, &x, &Schedule::frozen(0.5, 0.5), 3.0, &psi0, None, &opts).unwrap();
        let t1 = first_orthogonal_time(&r, 1e-2).unwrap();
        let t2 = first_orthogonal_time(&r, 5e-3).unwrap();
        assert!(t2 >= t1);
        assert!((t2 - (std::f64::consts::FRAC_PI_2 - 5e-3)).abs() < 1e-4, "{t2}");
    }

    #[test]
    fn flow_endpoints_and_degenerate_final_gap() {
        let (a, _) = pair();
        let b = SparseOperator::from_real_diagonal(&[0.5, 0.5, 2.0]);
        let flow = spectral_flow(&a, &b, &Schedule::Linear, 11, 3, &LanczosOptions::default()).unwrap();
        let ea = dense_hermitian_eigen(a.to_dense());
        assert!((flow.eigenvalues[0][0] - ea.values[0]).abs() < 1e-12);
        assert!((flow.eigenvalues[10][0] - 0.5).abs() < 1e-12);
        assert_eq!(flow.final_ground_multiplicity, 2);
        assert!((flow.gaps[10] - 1.5).abs() < 1e-12);
        assert!(flow.min_gap <= flow.gaps.iter().copied().fold(f64::INFINITY, f64::min) + 1e-15);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (t, v) = golden_section_min(&|x| Ok((x - 0.3).powi(2) + 1.0), 0.0, 1.0, 1e-9).unwrap();
        assert!((t - 0.3).abs() < 1e-6 && (v - 1.0).abs() < 1e-12);
    }
}
