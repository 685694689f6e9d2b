use std::collections::BTreeMap;

use anyhow::bail;
use serde::Serialize;

use aqc_tsp::bounds::{
    energy_moments, general_integral_bounds, max_initial_energy, theta_for_unit_resource, tsp_estimates, Beta,
    BoundsReport, IntegralBounds,
};
use aqc_tsp::evolution::{evolve, first_orthogonal_time, spectral_flow, EvolveOptions, Projector};
use aqc_tsp::linalg::{dense_hermitian_eigen, lowest_eigenpairs, LanczosOptions};
use aqc_tsp::search::{
    build_search_hamiltonians, scaling_study, search_moments, ScalingStudy, ScheduleFamily, SearchInstance,
    ThresholdOptions,
};
use aqc_tsp::sparse::{norm, SparseOperator};
use aqc_tsp::tour_oracle::{brute_force_shortest, tour_to_basis_state, verify_filter, FilterVerification, Tour};
use aqc_tsp::tsp_model::{FilterFault, HamiltonianSet, TspInstance, VacuumDynamics};

use crate::config::RunConfig;
use crate::report::{emit, number, Table};
use crate::{InvariantFailure, ValidationError};

/// Survival amplitude below which a state counts as orthogonal to `ψ₀`.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-2;
const ENDPOINT_TOLERANCE: f64 = 1e-8;
const DENSE_LIMIT: usize = 2000;

type Definitions = BTreeMap<&'static str, &'static str>;

fn definitions(pairs: &[(&'static str, &'static str)]) -> Definitions {
    pairs.iter().copied().collect()
}

const BOUNDS_DEFINITIONS: [(&str, &str); 11] = [
    ("t_perp", "orthogonality time bound sqrt(2) hbar / (spread * integral of g)"),
    ("t_forall", "reachability time bound 2 hbar / (sqrt(spread^2 + energy^2) * integral of g)"),
    ("g_integral", "integral of g over tau in [0, 1]"),
    ("energy_expectation", "<psi0|H_P|psi0>"),
    ("spread", "||(H_P - <H_P>) psi0||, energy spread of the initial state"),
    ("max_initial_energy", "max over tau of <psi0| f H_I + g H_P |psi0>"),
    ("max_initial_energy_tau", "tau where that maximum sits"),
    ("estimate_spread", "small-theta spread estimate s sqrt((N-1)!) |theta|^N"),
    ("estimate_energy", "small-theta energy estimate s (N-1)! |theta|^(2N)"),
    ("estimate_energy_with_g", "estimate_energy times the integral of g"),
    ("theta_star", "theta with (N-1)! theta^(2N) = 1"),
];

struct TspSetup {
    instance: TspInstance,
    set: HamiltonianSet,
    dynamics: VacuumDynamics,
}

fn tsp_setup(config: &RunConfig) -> anyhow::Result<TspSetup> {
    let instance = config.load_instance()?;
    instance.check_link_mode(config.symmetric_links)?;
    let n = instance.n_cities();
    log::info!("building Hamiltonians for {n} cities");
    let set = HamiltonianSet::build(&instance, &config.model(n))?;
    let dynamics = set.vacuum_dynamics()?;
    log::info!("basis {} states, hooker/marker vacuum sector {}", set.basis.len(), dynamics.dim());
    Ok(TspSetup { instance, set, dynamics })
}

#[derive(Serialize)]
struct OracleReport {
    n_cities: usize,
    symmetric_links: bool,
    optimal_length: f64,
    optimal_tours: Vec<Tour>,
}

pub fn solve_classical(config: &RunConfig) -> anyhow::Result<()> {
    let instance = config.load_instance()?;
    instance.check_link_mode(config.symmetric_links)?;
    let oracle = brute_force_shortest(&instance, config.symmetric_links)?;
    let report = OracleReport {
        n_cities: instance.n_cities(),
        symmetric_links: config.symmetric_links,
        optimal_length: oracle.optimal_length,
        optimal_tours: oracle.optimal_tours,
    };
    let defs = definitions(&[
        ("optimal_length", "shortest closed tour from city 0, by exhaustive permutation"),
        ("optimal_tours", "every tour within tie tolerance of the optimum"),
    ]);
    emit("solve-classical", config, &defs, &report, &[])
}

pub fn verify_filter_cmd(config: &RunConfig, cities: Option<usize>, fault: FilterFault) -> anyhow::Result<()> {
    let n = match (cities, &config.instance) {
        (Some(n), _) => n,
        (None, Some(_)) => config.load_instance()?.n_cities(),
        (None, None) => 3,
    };
    let report: FilterVerification = verify_filter(n, config.symmetric_links, &config.cutoff(n), fault)?;
    let mut table = Table::new(
        "classes",
        &[
            ("class", "configuration class of the link pattern"),
            ("count", "configurations of that class in the basis"),
            ("statistic", "vacuum leak (eliminated), ||(Q-1)|tour>|| (unit tours) or min |<Q>-1| (multi-traversal)"),
            ("passed", "1 if the class behaves as required"),
        ],
    );
    for c in &report.classes {
        table.rows.push(vec![
            c.class.name().to_string(),
            c.count.to_string(),
            c.statistic.map_or("-".into(), number),
            u8::from(c.passed).to_string(),
        ]);
    }
    let defs = definitions(&[
        ("matrix_vs_combinatorial", "max entry gap between matrix Q and its combinatorial expansion on vacuum columns"),
        ("unit_tours", "Hamiltonian cycles with unit occupations found in the basis"),
        ("classes", "per-class check of the filtering operator Q"),
    ]);
    emit("verify-filter", config, &defs, &report, &[table])?;
    if !report.passed {
        let failed: Vec<&str> = report.classes.iter().filter(|c| !c.passed).map(|c| c.class.name()).collect();
        bail!(InvariantFailure(format!(
            "filter verification failed (classes: {}; matrix gap {:e})",
            if failed.is_empty() { "none".to_string() } else { failed.join(", ") },
            report.matrix_vs_combinatorial
        )));
    }
    Ok(())
}

fn lowest_levels(op: &SparseOperator, k: usize) -> anyhow::Result<Vec<f64>> {
    if op.is_diagonal() {
        let mut d: Vec<f64> = op.diagonal().iter().map(|c| c.re).collect();
        d.sort_by(f64::total_cmp);
        d.truncate(k);
        return Ok(d);
    }
    if op.dim() <= DENSE_LIMIT {
        let mut v = dense_hermitian_eigen(op.to_dense()).values;
        v.truncate(k);
        return Ok(v);
    }
    Ok(lowest_eigenpairs(op, k, &LanczosOptions::default())?.values)
}

#[derive(Serialize)]
struct SpectrumReport {
    sector_dimension: usize,
    initial_shift: f64,
    min_gap: f64,
    min_gap_tau: f64,
    final_ground_multiplicity: usize,
    optimal_length: f64,
    start_levels: Vec<f64>,
    end_levels: Vec<f64>,
    endpoint_deviation: f64,
    ground_vs_oracle: f64,
    checks_passed: bool,
}

pub fn spectrum(config: &RunConfig) -> anyhow::Result<()> {
    let TspSetup { instance, dynamics, .. } = tsp_setup(config)?;
    let schedule = &config.schedule;
    let k = config.levels.max(2);
    let flow = spectral_flow(&dynamics.h_i, &dynamics.h_p, schedule, config.tau_samples, k, &LanczosOptions::default())?;
    // independent endpoint route: H_I dense, H_P diagonal on the sector
    let start: Vec<f64> = lowest_levels(&dynamics.h_i, k)?.iter().map(|e| e * schedule.f(0.0)).collect();
    let end: Vec<f64> = lowest_levels(&dynamics.h_p, k)?.iter().map(|e| e * schedule.g(1.0)).collect();
    let deviation = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max)
    };
    let endpoint_deviation =
        deviation(&flow.eigenvalues[0], &start).max(deviation(flow.eigenvalues.last().unwrap(), &end));
    let oracle = brute_force_shortest(&instance, config.symmetric_links)?;
    let ground_vs_oracle = (end[0] / schedule.g(1.0) - oracle.optimal_length).abs();
    let checks_passed = endpoint_deviation <= ENDPOINT_TOLERANCE && ground_vs_oracle <= 1e-9;

    let mut columns: Vec<(String, String)> = vec![
        ("tau".into(), "scaled time t/T".into()),
        ("f".into(), "coefficient of H_I".into()),
        ("g".into(), "coefficient of H_P".into()),
    ];
    for i in 0..k {
        columns.push((format!("e{i}"), format!("eigenvalue {i} of f H_I + g H_P on the sector")));
    }
    columns.push(("gap".into(), "e1 - e0, or e_d - e0 at tau = 1 with d the ground multiplicity".into()));
    let mut table = Table { name: "flow", columns, rows: Vec::new() };
    for (i, &tau) in flow.tau.iter().enumerate() {
        let mut row = vec![tau, schedule.f(tau), schedule.g(tau)];
        row.extend(&flow.eigenvalues[i]);
        row.push(flow.gaps[i]);
        table.push(&row);
    }
    let report = SpectrumReport {
        sector_dimension: dynamics.dim(),
        initial_shift: dynamics.initial_shift,
        min_gap: flow.min_gap,
        min_gap_tau: flow.min_gap_tau,
        final_ground_multiplicity: flow.final_ground_multiplicity,
        optimal_length: oracle.optimal_length,
        start_levels: start,
        end_levels: end,
        endpoint_deviation,
        ground_vs_oracle,
        checks_passed,
    };
    let defs = definitions(&[
        ("min_gap", "smallest ground-to-first-excited gap along the flow, golden-section refined"),
        ("initial_shift", "truncated ground energy of H_I, subtracted so the initial ground energy is 0"),
        ("endpoint_deviation", "relative gap between flow endpoints and directly diagonalized H_I, H_P"),
        ("ground_vs_oracle", "|lowest H_P level - brute-force optimal length|"),
        ("sector_dimension", "states with empty hooker and marker modes"),
    ]);
    emit("spectrum", config, &defs, &report, &[table])?;
    if !checks_passed {
        bail!(InvariantFailure(format!(
            "spectrum endpoints disagree (deviation {endpoint_deviation:e}, oracle gap {ground_vs_oracle:e})"
        )));
    }
    Ok(())
}

fn optimal_projector(setup: &TspSetup, symmetric: bool) -> anyhow::Result<(f64, Projector)> {
    let oracle = brute_force_shortest(&setup.instance, symmetric)?;
    let mut positions = Vec::new();
    for tour in &oracle.optimal_tours {
        let state = tour_to_basis_state(tour, setup.set.registry())?;
        match setup.dynamics.position(&setup.set.basis, &state) {
            Some(p) => positions.push(p),
            None => bail!(ValidationError("optimal tour state lies outside the truncated basis".into())),
        }
    }
    Ok((oracle.optimal_length, Projector::from_indices(setup.dynamics.dim(), &positions)?))
}

fn tsp_bounds(config: &RunConfig, setup: &TspSetup) -> anyhow::Result<(BoundsReport, IntegralBounds)> {
    let d = &setup.dynamics;
    let n = setup.instance.n_cities();
    let moments = energy_moments(&d.psi0, &d.h_p)?;
    let max = max_initial_energy(&d.psi0, &d.h_i, &d.h_p, &config.schedule)?;
    let estimates = tsp_estimates(n, setup.set.theta.norm(), setup.set.s);
    let report = BoundsReport::new(&moments, &config.schedule, max, Some(estimates), Some(theta_for_unit_resource(n)));
    let integral = general_integral_bounds(&d.h_i, &d.h_p, &config.schedule, &d.psi0, Beta::InstantaneousMean, config.total_time)?;
    Ok((report, integral))
}

#[derive(Serialize)]
struct EvolveReport {
    sector_dimension: usize,
    initial_shift: f64,
    optimal_length: f64,
    steps: usize,
    initial_success: f64,
    success_probability: f64,
    final_survival_probability: f64,
    first_orthogonal_time: Option<f64>,
    max_unitarity_drift: f64,
    bounds: BoundsReport,
    bound_respected: bool,
}

pub fn evolve_cmd(config: &RunConfig) -> anyhow::Result<()> {
    let setup = tsp_setup(config)?;
    let (optimal_length, projector) = optimal_projector(&setup, config.symmetric_links)?;
    let d = &setup.dynamics;
    let options = EvolveOptions {
        dt: config.dt,
        sample_stride: config.sample_stride,
        stepper: config.stepper,
        ..EvolveOptions::default()
    };
    let result = evolve(&d.h_i, &d.h_p, &config.schedule, config.total_time, &d.psi0, Some(&projector), &options)?;
    let (bounds, _) = tsp_bounds(config, &setup)?;
    let orth = first_orthogonal_time(&result, ORTHOGONALITY_TOLERANCE);
    let bound_respected = orth.is_none_or(|t| t >= bounds.t_perp - 2.0 * result.dt);
    let targets = result.target_probability.clone().unwrap_or_default();

    let mut table = Table::new(
        "trace",
        &[
            ("t", "time"),
            ("survival", "|<psi0|psi(t)>|^2"),
            ("target", "probability on the optimal tour states"),
            ("energy", "<psi(t)|H(t)|psi(t)>"),
            ("initial_state_energy", "<psi0|H(t)|psi0>"),
            ("drift", "| ||psi(t)|| - 1 |"),
        ],
    );
    for i in 0..result.times.len() {
        table.push(&[
            result.times[i],
            result.survival[i].norm_sqr(),
            targets.get(i).copied().unwrap_or(f64::NAN),
            result.energy[i],
            result.initial_energy[i],
            result.unitarity_drift[i],
        ]);
    }
    let report = EvolveReport {
        sector_dimension: d.dim(),
        initial_shift: d.initial_shift,
        optimal_length,
        steps: result.steps,
        initial_success: norm(&projector.apply(&d.psi0)).powi(2),
        success_probability: norm(&projector.apply(&result.final_state)).powi(2),
        final_survival_probability: result.survival.last().map_or(1.0, |c| c.norm_sqr()),
        first_orthogonal_time: orth,
        max_unitarity_drift: result.max_unitarity_drift,
        bounds,
        bound_respected,
    };
    let mut defs = definitions(&BOUNDS_DEFINITIONS);
    defs.extend([
        ("success_probability", "weight of psi(T) on the optimal tour states"),
        ("initial_success", "weight of psi0 on the optimal tour states"),
        ("first_orthogonal_time", "first t with |<psi0|psi(t)>| <= 0.01, linearly interpolated"),
        ("bound_respected", "first_orthogonal_time >= t_perp - 2 dt"),
        ("max_unitarity_drift", "largest | ||psi|| - 1 | over the run"),
    ]);
    emit("evolve", config, &defs, &report, &[table])?;
    if !bound_respected {
        bail!(InvariantFailure("a first-orthogonal time fell below the T_perp bound".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundsCmdReport {
    problem: String,
    bounds: BoundsReport,
    integral_bounds: IntegralBounds,
}

pub fn bounds_cmd(config: &RunConfig, search_m: Option<usize>, marked: usize) -> anyhow::Result<()> {
    let report = match search_m {
        Some(m) => {
            let instance = SearchInstance::uniform(m, marked)?;
            let (h0, hf) = build_search_hamiltonians(&instance)?;
            let moments = search_moments(&instance);
            let max = max_initial_energy(instance.amplitudes(), &h0, &hf, &config.schedule)?;
            let integral = general_integral_bounds(
                &h0,
                &hf,
                &config.schedule,
                instance.amplitudes(),
                Beta::InstantaneousMean,
                config.total_time,
            )?;
            BoundsCmdReport {
                problem: format!("search over {m} states, marked {marked}"),
                bounds: BoundsReport::new(&moments, &config.schedule, max, None, None),
                integral_bounds: integral,
            }
        }
        None => {
            let setup = tsp_setup(config)?;
            let (bounds, integral_bounds) = tsp_bounds(config, &setup)?;
            BoundsCmdReport {
                problem: format!("travelling salesman over {} cities", setup.instance.n_cities()),
                bounds,
                integral_bounds,
            }
        }
    };
    let mut defs = definitions(&BOUNDS_DEFINITIONS);
    defs.extend([
        ("integral_bounds", "integral conditions at duration total_time with the instantaneous-mean shift"),
        ("forall_integral", "integral over t of ||H psi0||, compared with 2 hbar"),
        ("perp_integral", "integral over t of ||(H - <H>) psi0||, compared with sqrt(2) hbar"),
    ]);
    emit("bounds", config, &defs, &report, &[])
}

#[derive(Serialize)]
struct SearchBenchReport {
    sizes: Vec<usize>,
    options: ThresholdOptions,
    studies: Vec<ScalingStudy>,
}

pub fn search_bench(
    config: &RunConfig,
    sizes: &[usize],
    families: &[ScheduleFamily],
    options: ThresholdOptions,
) -> anyhow::Result<()> {
    let mut table = Table::new(
        "scaling",
        &[
            ("family", "schedule family"),
            ("m", "number of states M"),
            ("t_threshold", "smallest duration found with success >= target (bisection at fixed dt/T)"),
            ("max_initial_energy", "max over tau of <phi0|H(tau)|phi0>"),
            ("t_perp", "orthogonality time bound"),
            ("g_integral", "integral of g"),
        ],
    );
    let mut studies = Vec::new();
    for &family in families {
        log::info!("scaling study for {}", family.name());
        let study = scaling_study(sizes, family, &options)?;
        for r in &study.rows {
            table.rows.push(vec![
                family.name().to_string(),
                r.m.to_string(),
                r.t_threshold.map_or("-".into(), number),
                number(r.max_initial_energy),
                number(r.t_perp),
                number(r.g_integral),
            ]);
        }
        studies.push(study);
    }
    let report = SearchBenchReport { sizes: sizes.to_vec(), options, studies };
    let defs = definitions(&[
        ("time_fit", "least-squares line of ln t_threshold against ln M, slope with 95% interval"),
        ("energy_fit", "same for max_initial_energy; log-linear in M for the exponential boost"),
        ("t_perp_fit", "same for the orthogonality time bound"),
        ("threshold_error", "why no threshold was found for that M, if any"),
    ]);
    emit("search-bench", config, &defs, &report, &[table])
}
