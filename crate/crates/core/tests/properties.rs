mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use dynmax::bounds::{admc_bounds, detect_times};
use dynmax::graph::{random_connected, NetworkSnapshot, NodeId};
use dynmax::protocols::{initial_state, step, Mode, ProtocolParams, ProtocolState};
use dynmax::simulator::{run, verify_timeline};
use dynmax::size_estimation::{dse_generate, expected_estimate_admc, mle_estimate};

fn random_case(seed: u64, exact: bool) -> (NetworkSnapshot, ProtocolParams, Vec<BTreeMap<NodeId, f64>>) {
    let mut r = common::rng(seed);
    let n = r.random_range(2..=10usize);
    let g = random_connected(n, 0.4, 10_000, &mut r).unwrap();
    let params = common::max_params(exact, r.random_range(0.01..0.3), g.diameter().unwrap() + r.random_range(0..2));
    let inputs = (0..12)
        .map(|_| g.nodes().iter().map(|&v| (v, r.random_range(-1.0..1.0))).collect())
        .collect();
    (g, params, inputs)
}

fn simulate(g: &NetworkSnapshot, params: &ProtocolParams, inputs: &[BTreeMap<NodeId, f64>]) -> Vec<ProtocolState> {
    let mut state = initial_state(params, &inputs[0], None).unwrap();
    let mut out = vec![state.clone()];
    for u in inputs {
        state = step(g, &state, params, u).unwrap();
        out.push(state.clone());
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Agents are anonymous: relabeling the nodes relabels the outputs.
    #[test]
    fn relabeling_permutes_outputs(seed in any::<u64>(), exact in any::<bool>()) {
        let (g, params, inputs) = random_case(seed, exact);
        let nodes: Vec<NodeId> = g.nodes().iter().copied().collect();
        let mut shuffled = nodes.clone();
        shuffled.shuffle(&mut common::rng(seed ^ 0x5eed));
        let map: BTreeMap<NodeId, NodeId> = nodes.iter().copied().zip(shuffled).collect();
        let h = NetworkSnapshot::new(nodes.iter().map(|v| map[v]), g.edges().iter().map(|&(a, b)| (map[&a], map[&b]))).unwrap();
        let relabeled: Vec<BTreeMap<NodeId, f64>> =
            inputs.iter().map(|u| u.iter().map(|(v, &x)| (map[v], x)).collect()).collect();
        for (a, b) in simulate(&g, &params, &inputs).iter().zip(simulate(&h, &params, &relabeled)) {
            for (v, x) in a.outputs() {
                prop_assert_eq!(b.output(map[&v]), Some(x));
            }
        }
    }

    #[test]
    fn min_protocol_is_negated_max(seed in any::<u64>(), exact in any::<bool>()) {
        let (g, params, inputs) = random_case(seed, exact);
        let mut min_params = params;
        min_params.mode = Mode::Min;
        let negated: Vec<BTreeMap<NodeId, f64>> =
            inputs.iter().map(|u| u.iter().map(|(&v, &x)| (v, -x)).collect()).collect();
        for (a, b) in simulate(&g, &params, &inputs).iter().zip(simulate(&g, &min_params, &negated)) {
            prop_assert_eq!(a.negated(), b);
        }
    }

    #[test]
    fn exact_output_is_delayed_extremum(seed in any::<u64>()) {
        let (g, params, inputs) = random_case(seed, true);
        let depth = match params.variant {
            dynmax::protocols::Variant::Exact { depth } => depth,
            _ => unreachable!(),
        };
        for (k, state) in simulate(&g, &params, &inputs).iter().enumerate().skip(depth) {
            let source = &inputs[k.saturating_sub(depth + 1).min(inputs.len() - 1)];
            let want = source.values().copied().fold(f64::NEG_INFINITY, f64::max);
            for (_, x) in state.outputs() {
                prop_assert_eq!(x, want);
            }
        }
    }

    #[test]
    fn tracking_bound_grows_and_convergence_shrinks_with_alpha(
        diameter in 1usize..20,
        slope in 0.0f64..0.05,
        overshoot in 0.0f64..5.0,
        a in 0.0f64..0.5,
        b in 0.0f64..0.5,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (lo, hi) = (slope + 0.001 + lo, slope + 0.001 + hi);
        let r_lo = admc_bounds(diameter, lo, slope, &[overshoot], 0.0);
        let r_hi = admc_bounds(diameter, hi, slope, &[overshoot], 0.0);
        prop_assert!(r_lo.tracking_bound <= r_hi.tracking_bound);
        prop_assert!(r_lo.convergence_time >= r_hi.convergence_time);
        prop_assert!(r_hi.convergence_time.unwrap() >= r_hi.transient_time);
    }

    // A trace that decays geometrically into the band and stays there.
    #[test]
    fn detected_times_of_a_synthetic_trace(start in 1.0f64..10.0, ratio in 0.5f64..0.95, eps in 0.01f64..0.5, tail in 1usize..50) {
        let mut errors: Vec<f64> = std::iter::successors(Some(start), |e| Some(e * ratio)).take_while(|&e| e > eps).collect();
        let entry = errors.len() as u64;
        errors.extend((0..tail).map(|i| eps * (0.5 + 0.25 * ((i % 2) as f64))));
        let d = detect_times(&errors, eps);
        prop_assert!(d.converged);
        prop_assert_eq!(d.convergence, entry);
        prop_assert_eq!(d.transient, 0);
    }

    #[test]
    fn realized_timelines_respect_the_dwell_time(seed in any::<u64>(), dwell in 5u64..60) {
        let s = common::random_scenario(seed, common::max_params(false, 0.1, 0), 0.02, dwell, 400);
        let timeline = s.realize().unwrap();
        prop_assert!(verify_timeline(&timeline, Some(dwell)).is_ok());
        let starts = timeline.window_starts();
        prop_assert!(starts.windows(2).all(|w| w[1] - w[0] >= dwell));
    }

    #[test]
    fn min_protocols_pass_the_window_audit(seed in any::<u64>(), exact in any::<bool>()) {
        let mut params = common::max_params(exact, 0.08, 11);
        params.mode = Mode::Min;
        let s = common::random_scenario(seed, params, 0.03, 100, 400);
        let (_, summary) = run(&s).unwrap();
        for w in &summary.windows {
            prop_assert_eq!(w.audit.band_violations, 0, "window at {}", w.start);
            prop_assert_eq!(w.audit.decrease_violations, 0, "window at {}", w.start);
            if let Some(r) = w.identity_residual {
                prop_assert!(r <= 1e-12);
            }
        }
    }

    #[test]
    fn estimates_are_positive_and_finite(seed in any::<u64>(), p in 2usize..64) {
        let draws = dse_generate(p, &mut common::rng(seed));
        prop_assert!(draws.iter().all(|&u| u > 0.0 && u < 1.0));
        let n_hat = mle_estimate(&draws).unwrap();
        prop_assert!(n_hat.is_finite() && n_hat > 0.0);
    }

    // The worst-case expectation falls as the consensus error grows.
    #[test]
    fn worst_case_estimate_decreases_in_epsilon(n in 1usize..200, p in 2usize..60, a in 0.0f64..0.3, b in 0.0f64..0.3) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let e_lo = expected_estimate_admc(n, p, lo).unwrap();
        let e_hi = expected_estimate_admc(n, p, hi).unwrap();
        prop_assert!(e_hi <= e_lo * (1.0 + 1e-12));
    }
}

#[test]
fn diameter_matches_floyd_warshall_on_small_graphs() {
    for n in 1..=4u32 {
        for edges in common::connected_graphs(n) {
            let g = NetworkSnapshot::new((1..=n).map(NodeId), edges.iter().copied()).unwrap();
            assert_eq!(g.diameter().unwrap(), common::brute_diameter(n, &edges), "{edges:?}");
        }
    }
}
