//! Slot outcomes of the time-slotted baseline against closed forms.

use hopper_core::network::build_chain;
use hopper_core::sync::{run_slot, LaneOutcome, SlotConfig, SyncSim};
use hopper_core::{PhysicalParams, SimRng, SimTime};

/// Empirical per-lane success rate over `slots` slots.
fn lane_success_rate(n_links: usize, p_le: f64, lanes: usize, slots: usize, seed: u64) -> (f64, usize) {
    let params = PhysicalParams::default();
    let slot = SlotConfig::new(p_le, lanes, 0.01, &params).unwrap();
    let mut rng = SimRng::seed_from_u64(seed);
    let mut ok = 0;
    let mut total = 0;
    for k in 0..slots {
        let start = SimTime::from_secs(k as f64 * slot.t_slot);
        for o in run_slot(n_links, &slot, &params, start, &mut rng) {
            total += 1;
            ok += usize::from(matches!(o, LaneOutcome::Delivered(_)));
        }
    }
    (ok as f64 / total as f64, total)
}

#[test]
fn lane_success_matches_product_formula() {
    let p_bsm = PhysicalParams::default().bsm_success_prob;
    for (links, repeaters) in [(2usize, 1i32), (4, 3)] {
        for p_le in [0.3, 0.7, 0.9] {
            let (rate, n) = lane_success_rate(links, p_le, 4, 10_000, 17 + links as u64);
            assert!(n >= 10_000);
            let expect = p_le.powi(links as i32) * p_bsm.powi(repeaters);
            let se = (expect * (1.0 - expect) / n as f64).sqrt();
            assert!(
                (rate - expect).abs() <= 3.0 * se,
                "L={links} R={repeaters} p={p_le}: {rate} vs {expect} (se {se})"
            );
        }
    }
}

#[test]
fn doubling_memory_doubles_the_slot_phase() {
    let params = PhysicalParams::default();
    let a = SlotConfig::new(0.6, 5, 0.1, &params).unwrap();
    let b = SlotConfig::new(0.6, 10, 0.1, &params).unwrap();
    assert_eq!(b.t_le, 2.0 * a.t_le);
}

#[test]
fn signalling_dominates_long_links_and_generation_short_ones() {
    let params = PhysicalParams::default();
    for (length, signal_wins) in [(5e6, true), (5.0, false)] {
        let chain = build_chain(3, length, 4, &params).unwrap();
        let slot = SlotConfig::for_chain(&chain, &params, 0.9).unwrap();
        assert_eq!(slot.t_signal > slot.t_le, signal_wins, "length {length}");
    }
}

#[test]
fn fidelity_drops_with_memory_size() {
    let params = PhysicalParams::default();
    let mut previous = f64::INFINITY;
    for per_dir in [5usize, 20, 80] {
        let chain = build_chain(3, 5e6, 2 * per_dir, &params).unwrap();
        let slot = SlotConfig::for_chain(&chain, &params, 0.9).unwrap();
        let m = SyncSim::new(chain, params, slot, 60.0, 5).run().metrics;
        let f = m.mean_fidelity().unwrap();
        assert!(f < previous, "{per_dir}: {f} !< {previous}");
        assert!(m.throughput() <= slot.max_throughput());
        previous = f;
    }
}
