use hopper_core::fidelity::{dephase, swap_fidelity};
use hopper_core::hopper::{HopperConfig, HopperOutcome, HopperSim, SlaveLookup};
use hopper_core::network::{build_chain, LinkId};
use hopper_core::{Fidelity, PhysicalParams, SimTime};

fn long_params() -> PhysicalParams {
    PhysicalParams::default()
}

fn short_params() -> PhysicalParams {
    PhysicalParams {
        gamma: 0.01,
        ..PhysicalParams::default()
    }
}

fn run(
    n_repeaters: usize,
    link_length_m: f64,
    cells_per_node: usize,
    params: PhysicalParams,
    config: HopperConfig,
    seed: u64,
) -> HopperOutcome {
    let chain = build_chain(n_repeaters, link_length_m, cells_per_node, &params).unwrap();
    HopperSim::new(chain, params, config, seed).run()
}

/// Scripted run: generation off, `preload` pairs on every link at t = 0.
fn scripted(n_repeaters: usize, params: PhysicalParams, per_dir: usize, preload: usize, seed: u64) -> HopperOutcome {
    let chain = build_chain(n_repeaters, 16384.0, 2 * per_dir, &params).unwrap();
    let n_links = chain.links().len();
    let config = HopperConfig {
        n_applications: 1,
        duration_s: 10.0,
        generation: false,
        trace: true,
        dump_messages: true,
        audit: true,
        record_deliveries: true,
        ..HopperConfig::default()
    };
    let mut sim = HopperSim::new(chain, params, config, seed);
    for j in 0..n_links {
        sim.preload(LinkId(j as u32), preload);
    }
    sim.run()
}

/// Parameters whose latencies and durations are exact binary fractions, so
/// the closed form holds with `==`.
fn dyadic_params() -> PhysicalParams {
    PhysicalParams {
        bsm_success_prob: 1.0,
        bsm_duration: 1.0 / 1024.0,
        xz_duration: 1.0 / 512.0,
        // 16384 m links: 1/64 s per hop
        signal_speed: 1_048_576.0,
        ..long_params()
    }
}

#[test]
fn single_rtt_delivery_time_is_exact() {
    for n_repeaters in [0usize, 1, 3, 6] {
        let params = dyadic_params();
        let out = scripted(n_repeaters, params, 3, 1, 1);
        let hop = 16384.0 / params.signal_speed;
        assert_eq!(hop, 1.0 / 64.0);
        let hops = (n_repeaters + 1) as f64;
        let expect_delivery = hops * hop + n_repeaters as f64 * params.bsm_duration + params.xz_duration;
        assert_eq!(out.deliveries.len(), 1, "{} repeaters", n_repeaters);
        let (t, _) = out.deliveries[0].timeline.delivered.unwrap();
        assert_eq!(t.as_secs(), expect_delivery, "{} repeaters", n_repeaters);

        // EsRemComp reaches the source one reverse-path latency later
        let trace = out.trace.unwrap();
        let comp = trace
            .lines()
            .find(|l| l.contains("EsRemComp"))
            .expect("EsRemComp delivered");
        let t_comp: f64 = comp.split('\t').next().unwrap().parse().unwrap();
        let expect_comp = expect_delivery + hops * hop;
        assert!((t_comp - expect_comp).abs() < 1e-9, "{t_comp} vs {expect_comp}");

        let m = &out.metrics;
        assert_eq!((m.attempts, m.successes, m.abandoned), (2, 1, 1));
    }
}

#[test]
fn success_sequence_matches_the_reference_procedure() {
    let params = PhysicalParams {
        bsm_success_prob: 1.0,
        ..dyadic_params()
    };
    let out = scripted(3, params, 3, 3, 5);
    let dump = out.messages.unwrap();
    let first: Vec<Vec<&str>> = dump
        .lines()
        .map(|l| l.split('\t').collect::<Vec<_>>())
        .filter(|f| f[2] == "n0:0->n4:0#0")
        .collect();
    let hops: Vec<(&str, &str)> = first.iter().map(|f| (f[1], f[3])).collect();
    assert_eq!(
        hops,
        [
            ("EsReq", "n0->n1"),
            ("EsReq", "n1->n2"),
            ("EsReq", "n2->n3"),
            ("EsReq", "n3->n4"),
            ("EsRemComp", "n4->n0"),
        ]
    );
    // one two-bit correction per traversed repeater
    let bits_len: Vec<usize> = first[..4]
        .iter()
        .map(|f| {
            let bits = f[4].rsplit("bits=").next().unwrap();
            if bits == "-" {
                0
            } else {
                bits.len() / 2
            }
        })
        .collect();
    assert_eq!(bits_len, [0, 1, 2, 3]);
    // a fresh cell on each preloaded link serves the next attempts
    assert_eq!(out.metrics.successes, 3);
    assert_eq!(out.metrics.failures(), 0);
}

#[test]
fn failed_swap_frees_successor_and_retries() {
    // find a seed whose first attempt fails at the last repeater
    let params = PhysicalParams {
        bsm_success_prob: 0.5,
        ..dyadic_params()
    };
    let (seed, out) = (0..200u64)
        .map(|s| (s, scripted(3, params, 3, 3, s)))
        .find(|(_, o)| {
            o.messages
                .as_ref()
                .unwrap()
                .contains("EsRemFail\tn0:0->n4:0#0\tn3->n0\tat=n3 cause=bsm")
        })
        .expect("some seed fails at n3");
    let dump = out.messages.unwrap();
    assert!(
        dump.contains("EsFree\tn0:0->n4:0#0\tn3->n4\t"),
        "seed {seed}: no EsFree towards the destination\n{dump}"
    );
    assert!(
        dump.contains("EsReq\tn0:0->n4:0#1\tn0->n1\t"),
        "no retry from the source"
    );
    // the freed mirror cell was found and released
    assert_eq!(out.metrics.ignored_frees, 0);
    assert!(out.metrics.failures_bsm >= 1);
}

#[test]
fn small_memories_fail_on_stale_cells_and_retry() {
    let config = HopperConfig {
        n_applications: 1,
        duration_s: 5.0,
        dump_messages: true,
        audit: true,
        ..HopperConfig::default()
    };
    let out = run(3, 5e6, 2, long_params(), config, 11);
    let m = &out.metrics;
    assert!(m.failures_stale > m.successes, "{m:?}");
    let dump = out.messages.unwrap();
    assert!(dump.contains("cause=stale-cell"));
    // retries carry increasing attempt ids
    assert!(dump.contains("#1\tn0->n1") && dump.contains("#2\tn0->n1"));
}

#[test]
fn delivered_fidelity_matches_straight_line_recomputation() {
    for (n_repeaters, factor) in [(0usize, 1.0), (1, 1.0), (3, 1.0), (3, 2.0), (6, 1.0)] {
        let params = PhysicalParams {
            composite_decay_factor: factor,
            ..long_params()
        };
        let config = HopperConfig {
            n_applications: 30,
            duration_s: 10.0,
            record_deliveries: true,
            ..HopperConfig::default()
        };
        let out = run(n_repeaters, 5e6, 100, params, config, 3);
        assert!(out.deliveries.len() > 100);
        let g = params.gamma;
        let gc = params.composite_gamma();
        for d in &out.deliveries {
            let tl = &d.timeline;
            assert_eq!(tl.pair_births.len(), n_repeaters + 1);
            assert_eq!(tl.bsm_times.len(), n_repeaters);
            let (t_done, got) = tl.delivered.unwrap();
            let pair_at = |j: usize, t: SimTime| {
                let (birth, f) = tl.pair_births[j];
                dephase(f, g, t.since(birth))
            };
            let want = if n_repeaters == 0 {
                pair_at(0, t_done)
            } else {
                let t1 = tl.bsm_times[0];
                let mut comp = swap_fidelity(pair_at(0, t1), pair_at(1, t1));
                for j in 2..=n_repeaters {
                    let (prev, t) = (tl.bsm_times[j - 2], tl.bsm_times[j - 1]);
                    comp = swap_fidelity(dephase(comp, gc, t.since(prev)), pair_at(j, t));
                }
                dephase(comp, gc, t_done.since(tl.bsm_times[n_repeaters - 1]))
            };
            assert_eq!(got, want, "{} repeaters, {:?}", n_repeaters, d.tuple);
            assert!(got >= Fidelity::MIXED);
        }
    }
}

#[test]
fn perfect_swaps_with_one_application_never_fail() {
    let params = PhysicalParams {
        bsm_success_prob: 1.0,
        ..short_params()
    };
    let config = HopperConfig {
        n_applications: 1,
        audit: true,
        ..HopperConfig::default()
    };
    let m = run(3, 5.0, 300, params, config, 21).metrics;
    assert!(m.successes > 1000);
    assert_eq!(m.failures(), 0);
    assert!(m.abandoned <= 1);
    assert_eq!(m.successes + m.abandoned, m.attempts);
}

#[test]
fn concurrent_applications_queue_for_cells() {
    let config = HopperConfig {
        n_applications: 30,
        duration_s: 5.0,
        audit: true,
        ..HopperConfig::default()
    };
    let m = run(3, 5e6, 20, long_params(), config, 4).metrics;
    assert!(m.source_wait.count > 0);
    assert!(m.source_wait.mean().unwrap() > 0.0);
    assert!(m.per_app.iter().all(|&n| n > 0), "{:?}", m.per_app);
    assert_eq!(m.per_app.iter().sum::<u64>(), m.successes);
}

#[test]
fn hold_time_slows_a_single_application() {
    let base = HopperConfig {
        n_applications: 1,
        duration_s: 20.0,
        audit: true,
        ..HopperConfig::default()
    };
    let held = HopperConfig {
        hold_time: 0.1,
        ..base.clone()
    };
    let fast = run(3, 5e6, 40, long_params(), base, 8).metrics;
    let slow = run(3, 5e6, 40, long_params(), held, 8).metrics;
    assert!(slow.successes < fast.successes);
    assert!(slow.successes > 0);
}

#[test]
fn strict_cell_index_lookup_loses_attempts_to_drift() {
    let mk = |lookup| HopperConfig {
        n_applications: 30,
        duration_s: 20.0,
        audit: true,
        slave_lookup: lookup,
        ..HopperConfig::default()
    };
    let by_pair = run(3, 5e6, 100, long_params(), mk(SlaveLookup::PairId), 2).metrics;
    let by_index = run(3, 5e6, 100, long_params(), mk(SlaveLookup::CellIndex), 2).metrics;
    assert!(by_index.failures_stale > 10 * by_pair.failures_stale.max(1));
    assert!(by_index.successes < by_pair.successes / 2);
}

#[test]
fn identical_seed_gives_identical_trace() {
    let config = HopperConfig {
        n_applications: 10,
        duration_s: 3.0,
        trace: true,
        dump_messages: true,
        ..HopperConfig::default()
    };
    let a = run(3, 5e6, 40, long_params(), config.clone(), 99);
    let b = run(3, 5e6, 40, long_params(), config.clone(), 99);
    let c = run(3, 5e6, 40, long_params(), config, 100);
    assert!(a.trace.as_ref().unwrap().lines().count() > 1000);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.messages, b.messages);
    assert_eq!(a.metrics, b.metrics);
    assert_ne!(a.trace, c.trace);
}
