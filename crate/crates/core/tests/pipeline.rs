//! End-to-end runs across modules: model construction, oracle, evolution
//! and bounds on the same instance.

use aqc_tsp::bounds::{characteristic_times, energy_moments, general_integral_bounds, theta_for_unit_resource, Beta};
use aqc_tsp::evolution::{evolve, first_orthogonal_time, EvolveOptions, Projector};
use aqc_tsp::schedule::Schedule;
use aqc_tsp::search::{run_search, search_moments, SearchInstance};
use aqc_tsp::sparse::norm;
use aqc_tsp::tour_oracle::{brute_force_shortest, tour_to_basis_state};
use aqc_tsp::tsp_model::{HamiltonianSet, ModelConfig, TspInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn asymmetric_instance() -> TspInstance {
    TspInstance::new(vec![vec![0.0, 1.0, 2.0], vec![1.6, 0.0, 1.0], vec![1.0, 2.2, 0.0]]).unwrap()
}

#[test]
fn target_ground_state_is_the_oracle_tour() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let d: Vec<Vec<f64>> =
            (0..3).map(|i| (0..3).map(|j| if i == j { 0.0 } else { rng.random_range(1.0..10.0) }).collect()).collect();
        let instance = TspInstance::new(d).unwrap();
        let set = HamiltonianSet::build(&instance, &ModelConfig::dynamics(3, theta_for_unit_resource(3))).unwrap();
        let dynamics = set.vacuum_dynamics().unwrap();
        let oracle = brute_force_shortest(&instance, false).unwrap();
        let diag: Vec<f64> = dynamics.h_p.diagonal().iter().map(|c| c.re).collect();
        let (best, &low) = diag.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert!((low - oracle.optimal_length).abs() < 1e-9);
        let state = tour_to_basis_state(&oracle.optimal_tours[0], set.registry()).unwrap();
        assert_eq!(dynamics.position(&set.basis, &state), Some(best));
    }
}

#[test]
fn slow_evolution_finds_the_shortest_tour() {
    let instance = asymmetric_instance();
    let set = HamiltonianSet::build(&instance, &ModelConfig::dynamics(3, theta_for_unit_resource(3))).unwrap();
    let d = set.vacuum_dynamics().unwrap();
    let oracle = brute_force_shortest(&instance, false).unwrap();
    let state = tour_to_basis_state(&oracle.optimal_tours[0], set.registry()).unwrap();
    let target = Projector::from_indices(d.dim(), &[d.position(&set.basis, &state).unwrap()]).unwrap();
    let options = EvolveOptions::with_dt(0.05);
    let fast = evolve(&d.h_i, &d.h_p, &Schedule::Linear, 5.0, &d.psi0, Some(&target), &options).unwrap();
    let slow = evolve(&d.h_i, &d.h_p, &Schedule::Linear, 320.0, &d.psi0, Some(&target), &options).unwrap();
    let (p_fast, p_slow) = (fast.final_target_probability().unwrap(), slow.final_target_probability().unwrap());
    assert!(p_slow > 0.9 && p_slow > p_fast, "fast {p_fast}, slow {p_slow}");
    assert!(slow.max_unitarity_drift < 1e-10);
}

#[test]
fn orthogonality_never_precedes_the_bound() {
    let instance = asymmetric_instance();
    let set = HamiltonianSet::build(&instance, &ModelConfig::dynamics(3, theta_for_unit_resource(3))).unwrap();
    let d = set.vacuum_dynamics().unwrap();
    let schedule = Schedule::Linear;
    let times = characteristic_times(&energy_moments(&d.psi0, &d.h_p).unwrap(), &schedule);
    let result = evolve(&d.h_i, &d.h_p, &schedule, 40.0, &d.psi0, None, &EvolveOptions::with_dt(0.02)).unwrap();
    if let Some(t) = first_orthogonal_time(&result, 1e-2) {
        assert!(t >= times.t_perp, "orthogonal at {t}, bound {}", times.t_perp);
    }
    let integral = general_integral_bounds(&d.h_i, &d.h_p, &schedule, &d.psi0, Beta::InstantaneousMean, 40.0).unwrap();
    assert!(integral.min_duration_perp > 0.0 && integral.min_duration_perp.is_finite());
}

#[test]
fn search_respects_its_orthogonality_time() {
    for m in [4, 16, 64] {
        let instance = SearchInstance::uniform(m, m / 2).unwrap();
        for duration in [1.0, 8.0, 64.0] {
            let options = EvolveOptions::with_dt((duration / 400.0_f64).min(0.02));
            let run = run_search(&instance, &Schedule::Linear, duration, &options, 1e-2).unwrap();
            if let Some(t) = run.first_orthogonal_time {
                assert!(t >= run.t_perp, "M={m}, T={duration}: {t} < {}", run.t_perp);
            }
            assert!(run.max_unitarity_drift < 1e-10);
            assert!((norm(&run.final_state) - 1.0).abs() < 1e-10);
        }
        let moments = search_moments(&instance);
        assert!((moments.energy - (1.0 - 1.0 / m as f64)).abs() < 1e-15);
    }
}
