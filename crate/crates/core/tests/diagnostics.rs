use rewire_core::diagnostics::gap::gap_values;
use rewire_core::diagnostics::{gap_series, modulus_of_continuity, sup_gap_concentration, StepPath};
use rewire_core::ensemble::EnsembleConfig;
use rewire_core::{simulate_optimized, MicroState, ModelSpec, RegularBipartiteGraph, ShuffleOn, SimOptions};

fn sis_config<'a>(spec: &'a ModelSpec, initial: &'a [f64], seeds: &'a [u64]) -> EnsembleConfig<'a> {
    EnsembleConfig {
        spec,
        degree: 2,
        graph_seed: 0,
        initial,
        horizon: 10.0,
        base_seed: 5,
        seed_indices: seeds,
        shuffle_on: ShuffleOn::EveryEvent,
    }
}

#[test]
fn four_cycle_gap_by_hand() {
    let graph = RegularBipartiteGraph::generate(4, 2, 3).unwrap();
    for node in 0..4 {
        let mut states = vec![1u8; 4];
        states[node] = 0;
        let r = gap_values(&states, &graph, 2, 2.0);
        // X1ᵀ A X2 / N = 2/4, d Ȳ1 Ȳ2 = 2 (1/4)(3/4)
        assert!((r[1] - 0.125).abs() < 1e-15);
        assert!((r[2] - 0.125).abs() < 1e-15);
        // no 1-1 edges: 0 - 2 (1/4)²
        assert!((r[0] + 0.125).abs() < 1e-15);
    }
}

#[test]
fn post_shuffle_gap_mean_at_four_nodes() {
    // Over the six 2-of-4 arrangements on a 4-cycle: four adjacent pairs with
    // X1ᵀ A X2 / N = 2/4 and two antipodal pairs with 4/4.
    let graph = RegularBipartiteGraph::generate(4, 2, 0).unwrap();
    let mut total = 0.0;
    for mask in 0..16u32 {
        if mask.count_ones() != 2 {
            continue;
        }
        let states: Vec<u8> = (0..4).map(|i| if mask >> i & 1 == 1 { 0 } else { 1 }).collect();
        total += gap_values(&states, &graph, 2, 2.0)[1];
    }
    let expected = (4.0 * 0.5 + 2.0 * 1.0) / 6.0 - 2.0 * 0.25;
    assert!((total / 6.0 - expected).abs() < 1e-15, "{} vs {expected}", total / 6.0);
}

#[test]
fn sup_gap_tail_decreases_in_n() {
    let spec = ModelSpec::sis(1.0).unwrap();
    let initial = [0.1, 0.9];
    let seeds: Vec<u64> = (0..60).collect();
    let config = sis_config(&spec, &initial, &seeds);
    let est = sup_gap_concentration(&config, &[100, 400, 1600], 0.1, Some((0, 1)), 0.99).unwrap();
    let p: Vec<f64> = est.iter().map(|e| e.p_hat).collect();
    assert!(p.windows(2).all(|w| w[1] < w[0]), "{p:?}");
}

#[test]
fn gap_is_symmetric_and_bounded_along_a_run() {
    let spec = ModelSpec::voter(3, 1.0).unwrap();
    let graph = RegularBipartiteGraph::generate(60, 3, 2).unwrap();
    let init = MicroState::from_counts(&[20, 20, 20]);
    let out = simulate_optimized(&spec, &graph, &init, 3.0, 8, SimOptions::full()).unwrap();
    let series = gap_series(out.snapshots.as_ref().unwrap(), &graph, 3.0).unwrap();
    assert_eq!(series.len(), out.trajectory.len());
    for row in 0..series.len() {
        for m in 0..3 {
            for l in 0..3 {
                assert_eq!(series.value(row, m, l), series.value(row, l, m));
                assert!(series.value(row, m, l).abs() <= 3.0);
            }
        }
    }
}

#[test]
fn modulus_is_monotone_in_delta_at_large_n() {
    let spec = ModelSpec::sis(1.0).unwrap();
    let graph = RegularBipartiteGraph::generate(1000, 2, 0).unwrap();
    let init = MicroState::from_counts(&[100, 900]);
    let out = simulate_optimized(&spec, &graph, &init, 10.0, 1, SimOptions::default()).unwrap();
    let path = StepPath::from_fraction(&out.trajectory, 0);
    let deltas = [5.0, 2.0, 1.0, 0.5, 0.1, 0.01, 0.001];
    let w: Vec<f64> = deltas
        .iter()
        .map(|&d| modulus_of_continuity(&path, d, 10.0).unwrap())
        .collect();
    assert!(w.windows(2).all(|p| p[1] <= p[0]), "{w:?}");
    // one infection moves Ȳ by 1/N; tiny windows see only a few
    assert!(w[6] < 0.01);
    assert!(w[0] > 0.5);
}
