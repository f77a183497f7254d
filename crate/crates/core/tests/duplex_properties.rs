use proptest::prelude::*;

use ionoline::duplex::{
    nanos_to_secs, parse_scenario, simulate, DuplexConfig, EventTrace, Injected, Injection, NodeId,
    Target, TraceEvent,
};

fn injection() -> impl Strategy<Value = Injection> {
    (
        0.0..40.0f64,
        prop::sample::select(vec![
            Injected::PowerOn,
            Injected::PowerOff,
            Injected::ChannelSevered,
        ]),
        prop::sample::select(vec![Target::Left, Target::Right, Target::Both]),
    )
        .prop_map(|(t, e, n)| Injection::new(t, e, n))
}

fn blink_order(trace: &EventTrace) -> Vec<NodeId> {
    trace
        .entries()
        .iter()
        .filter(|e| e.event == TraceEvent::BlinkStart)
        .map(|e| e.node)
        .collect()
}

/// Powered intervals of `node`, as (on, off) seconds.
fn powered_spans(trace: &EventTrace, node: NodeId, t_end: f64) -> Vec<(f64, f64)> {
    let mut spans = Vec::new();
    let mut on = None;
    for e in trace.entries().iter().filter(|e| e.node == node) {
        match e.event {
            TraceEvent::PowerOn => on = Some(nanos_to_secs(e.t)),
            TraceEvent::PowerOff => spans.extend(on.take().map(|s| (s, nanos_to_secs(e.t)))),
            _ => {}
        }
    }
    spans.extend(on.map(|s| (s, t_end)));
    spans
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fault_free_runs_alternate(t_end in 1.0..90.0f64) {
        let trace = simulate(&DuplexConfig::default(), &[], t_end).unwrap();
        let order = blink_order(&trace);
        prop_assert_eq!(order[0], NodeId::Left);
        prop_assert!(order.windows(2).all(|w| w[0] != w[1]));
        prop_assert_eq!(trace.count(TraceEvent::ModeSwitch), 0);
    }

    #[test]
    fn random_scenarios_are_causal_and_replayable(scenario in prop::collection::vec(injection(), 0..6)) {
        let cfg = DuplexConfig::default();
        let a = simulate(&cfg, &scenario, 45.0).unwrap();
        let b = simulate(&cfg, &scenario, 45.0).unwrap();
        prop_assert!(a.is_causal());
        prop_assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn powered_nodes_never_stall(scenario in prop::collection::vec(injection(), 0..6), rejoin: bool) {
        let cfg = DuplexConfig { rejoin, ..DuplexConfig::default() };
        let t_end = 45.0;
        let trace = simulate(&cfg, &scenario, t_end).unwrap();
        // Longest possible gap between blink starts while powered: a full
        // timeout since the last pulse (or boot) plus one sequence.
        let gap = cfg.peer_timeout + cfg.blink_sequence_duration() + 1e-6;
        for node in NodeId::ALL {
            let starts = trace.times(node, TraceEvent::BlinkStart);
            for (on, off) in powered_spans(&trace, node, t_end) {
                let mut last = on;
                for &t in starts.iter().filter(|&&t| t >= on && t <= off) {
                    prop_assert!(t - last <= gap, "{node} idle from {last} to {t}");
                    last = t;
                }
                prop_assert!(off - last <= gap, "{node} idle from {last} to {off}");
            }
        }
    }

    #[test]
    fn failover_within_timeout(t_cut in 2.0..30.0f64, both: bool) {
        let cfg = DuplexConfig::default();
        let scenario = if both {
            vec![Injection::new(t_cut, Injected::ChannelSevered, Target::Both)]
        } else {
            vec![Injection::new(t_cut, Injected::PowerOff, Target::Right)]
        };
        let trace = simulate(&cfg, &scenario, t_cut + 10.0).unwrap();
        let nodes: &[NodeId] = if both { &NodeId::ALL } else { &[NodeId::Left] };
        prop_assert_eq!(trace.count(TraceEvent::ModeSwitch), nodes.len());
        for &node in nodes {
            let switch = trace.times(node, TraceEvent::ModeSwitch)[0];
            let last_rx = trace
                .times(node, TraceEvent::PulseReceived)
                .into_iter()
                .fold(0.0, f64::max);
            prop_assert!(switch - last_rx <= cfg.peer_timeout + 1e-9);
            prop_assert!(switch >= t_cut);
        }
    }
}

#[test]
fn rejoin_disabled_stays_autonomous() {
    let cfg = DuplexConfig {
        rejoin: false,
        ..DuplexConfig::default()
    };
    let s = parse_scenario("10 inject power_off right\n20 inject power_on right\n").unwrap();
    let trace = simulate(&cfg, &s, 40.0).unwrap();
    assert_eq!(trace.times(NodeId::Left, TraceEvent::ModeSwitch).len(), 1);
}

#[test]
fn scenario_text_matches_built_scenario() {
    let cfg = DuplexConfig::default();
    let text = simulate(
        &cfg,
        &parse_scenario("10 inject power_off right").unwrap(),
        30.0,
    )
    .unwrap();
    let built = simulate(
        &cfg,
        &[Injection::new(10.0, Injected::PowerOff, Target::Right)],
        30.0,
    )
    .unwrap();
    assert_eq!(text, built);
}
