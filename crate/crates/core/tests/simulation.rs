use std::collections::HashMap;

use cbcast::checker::{check_all, HappensBefore};
use cbcast::simulator::{SimConfig, Simulation, StepRecord};
use cbcast::trace::{execution_from_trace, read_trace, write_trace};
use cbcast::{MessageId, ProcessId};
use proptest::prelude::*;

fn config() -> impl Strategy<Value = SimConfig> {
    (
        2usize..=5,
        any::<u64>(),
        50usize..=400,
        prop::sample::select(vec![0.0, 0.2]),
        prop::sample::select(vec![0.0, 0.1]),
    )
        .prop_map(|(n_procs, seed, max_steps, p_drop, p_duplicate)| SimConfig {
            n_procs,
            seed,
            max_steps,
            p_drop,
            p_duplicate,
            ..SimConfig::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn every_step_keeps_clock_and_history_in_agreement(cfg in config()) {
        let mut sim = Simulation::new(cfg).unwrap();
        let mut bad = Vec::new();
        sim.run_observed(|sim, record| {
            if let Some(pid) = record.pid() {
                if !sim.execution().procs()[pid.index()].clock_agrees_with_history() {
                    bad.push(record.clone());
                }
            }
        });
        prop_assert!(bad.is_empty(), "{bad:?}");
    }

    #[test]
    fn runs_never_violate_causal_delivery(cfg in config()) {
        let mut sim = Simulation::new(cfg).unwrap();
        sim.run();
        sim.drain().unwrap();
        let report = check_all(sim.execution());
        prop_assert!(report.is_clean(), "{report:?}");

        let hb = HappensBefore::build(sim.execution());
        prop_assert!(hb.is_irreflexive());
        prop_assert!(hb.is_transitive());
    }

    #[test]
    fn trace_rebuilds_the_same_histories(cfg in config()) {
        let mut sim = Simulation::new(cfg).unwrap();
        sim.run();
        let mut bytes = Vec::new();
        write_trace(sim.trace(), &mut bytes).unwrap();
        let rebuilt = execution_from_trace(read_trace::<u64, _>(bytes.as_slice()).unwrap()).unwrap();
        for (a, b) in rebuilt.procs().iter().zip(sim.execution().procs()) {
            prop_assert_eq!(a.history(), b.history());
            prop_assert_eq!(a.vc(), b.vc());
            prop_assert_eq!(a.delay_queue().len(), b.delay_queue().len());
        }
    }

    /// Over a loss-free, duplicate-free network every broadcast ends up
    /// delivered exactly once at every process.
    #[test]
    fn reliable_network_conserves_messages(cfg in config()) {
        let cfg = SimConfig { p_drop: 0.0, p_duplicate: 0.0, ..cfg };
        let mut sim = Simulation::new(cfg).unwrap();
        let mut sent: Vec<MessageId> = Vec::new();
        sim.run_observed(|_, record| {
            if let StepRecord::Broadcast { msg, .. } = record {
                sent.push(*msg);
            }
        });

        // Before draining, each message is in exactly one place per non-sender.
        let x = sim.execution();
        for &id in &sent {
            for p in x.procs().iter().filter(|p| p.id() != id.sender) {
                let delivered = p.history().delivered().filter(|m| m.id() == id).count();
                let queued = p.delay_queue().iter().filter(|m| m.id() == id).count();
                let in_flight = x.network().iter().filter(|f| f.dest == p.id() && f.msg.id() == id).count();
                prop_assert_eq!(delivered + queued + in_flight, 1, "{} at {}", id, p.id());
            }
        }

        sim.drain().unwrap();
        prop_assert_eq!(sim.queued(), 0);
        for p in sim.execution().procs() {
            let mut counts: HashMap<MessageId, usize> = HashMap::new();
            for m in p.history().delivered() {
                *counts.entry(m.id()).or_default() += 1;
            }
            prop_assert_eq!(counts.len(), sent.len());
            prop_assert!(counts.values().all(|c| *c == 1));
        }
    }

    /// Drops can strand messages behind lost predecessors, never reorder them.
    #[test]
    fn lossy_drain_stays_safe(seed in any::<u64>(), n in 2usize..=5) {
        let cfg = SimConfig { n_procs: n, seed, max_steps: 300, p_drop: 0.4, ..SimConfig::default() };
        let mut sim = Simulation::new(cfg).unwrap();
        sim.run();
        sim.drain().unwrap();
        prop_assert!(sim.execution().network().is_empty());
        prop_assert!(check_all(sim.execution()).is_clean());
    }
}

#[test]
fn duplicates_never_reach_the_queue_twice() {
    let cfg = SimConfig {
        n_procs: 3,
        seed: 3,
        max_steps: 500,
        p_duplicate: 1.0,
        ..SimConfig::default()
    };
    let mut sim = Simulation::new(cfg).unwrap();
    let mut discarded = 0;
    sim.run_observed(|sim, record| {
        if let StepRecord::Receive { queued: false, .. } = record {
            discarded += 1;
        }
        for p in sim.execution().procs() {
            let mut ids: Vec<_> = p.delay_queue().iter().map(|m| m.id()).collect();
            let len = ids.len();
            ids.sort();
            ids.dedup();
            assert_eq!(ids.len(), len);
        }
    });
    assert!(discarded > 0);
    sim.drain().unwrap();
    assert_eq!(sim.queued(), 0);
    assert!(check_all(sim.execution()).is_clean());
}

#[test]
fn single_process_cluster() {
    let mut sim = Simulation::new(SimConfig {
        n_procs: 1,
        max_steps: 20,
        ..SimConfig::default()
    })
    .unwrap();
    assert_eq!(sim.run(), 20);
    let p = &sim.execution().procs()[0];
    assert_eq!(p.vc().as_slice(), &[20]);
    assert_eq!(p.id(), ProcessId(0));
    assert!(check_all(sim.execution()).is_clean());
}
