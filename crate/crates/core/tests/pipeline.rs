//! Cross-module flows: serialization feeding decoders, two-layer overflow
//! round trips, and execution-mode reproducibility.

use counter_braids::decoder::{bp_decode, layered_decode, peel_decode};
use counter_braids::ensemble::EnsembleParams;
use counter_braids::graph::{
    build_single_layer, build_two_layer, encode, sample_flows, BraidGraph, FlowModel,
};
use counter_braids::montecarlo::{run_trials, SimConfig};
use counter_braids::Parallelism;

#[test]
fn serialized_graph_decodes_identically() {
    let graph = build_single_layer(300, 180, 3, 77).unwrap();
    let params = EnsembleParams::from_beta(3, 0.6, 0.25, 1).unwrap();
    let flows = sample_flows(300, &params, FlowModel::TwoPoint, 78).unwrap();
    let state = encode(&graph, &flows).unwrap();

    let reparsed = BraidGraph::from_text(&graph.to_text()).unwrap();
    let state2 = encode(&reparsed, &flows).unwrap();
    assert_eq!(state, state2);

    let direct = peel_decode(graph.single_layer(), state.layer_values(1), 1, 300).unwrap();
    let via_text = peel_decode(reparsed.single_layer(), state2.layer_values(1), 1, 300).unwrap();
    assert_eq!(direct, via_text);
}

#[test]
fn two_layer_overflow_round_trip() {
    // Depth-3 first layer so a few counters genuinely wrap.
    let graph = build_two_layer(600, 420, 320, 3, 3, 3, 30, 4242).unwrap();
    let params = EnsembleParams::from_beta(3, 0.7, 0.2, 1).unwrap();
    let flows = sample_flows(600, &params, FlowModel::TwoPoint, 4243).unwrap();
    let state = encode(&graph, &flows).unwrap();
    assert!(
        !state.overflow_log().is_empty(),
        "instance should exercise the overflow cascade"
    );
    let result = layered_decode(&graph, &state, 1, 400).unwrap();
    assert!(result.all_converged());
    assert_eq!(result.estimates, flows);
}

#[test]
fn oscillating_flows_stay_bracketed() {
    // Overloaded instance: whatever fails to converge must still bracket the
    // truth from above on odd stopping iterations and below on even ones.
    let params = EnsembleParams::from_beta(3, 0.4, 0.8, 1).unwrap();
    let graph = build_single_layer(200, 80, 3, 9).unwrap();
    let flows = sample_flows(200, &params, FlowModel::TwoPoint, 10).unwrap();
    let state = encode(&graph, &flows).unwrap();
    let result = bp_decode(graph.single_layer(), state.layer_values(1), 1, 201).unwrap();
    let odd = result.iterations % 2 == 1;
    for (f, &truth) in flows.iter().enumerate() {
        if odd {
            assert!(result.estimates[f] >= truth, "flow {f}");
        } else {
            assert!(result.estimates[f] <= truth, "flow {f}");
        }
    }
}

#[test]
fn trial_batches_reproduce_across_modes() {
    let cfg = SimConfig {
        m0: 1200,
        m1: 600,
        k: 3,
        eps: 0.15,
        f_min: 1,
        model: FlowModel::TwoPoint,
        trials: 8,
        seed: 5150,
        max_iter: 300,
        coupled: None,
        exec: Parallelism::Auto,
    };
    let parallel = run_trials(&cfg).unwrap();
    let sequential = run_trials(&SimConfig { exec: Parallelism::Sequential, ..cfg }).unwrap();
    assert_eq!(parallel, sequential);
}
