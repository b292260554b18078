//! End-to-end simulator behavior: protocol happy paths, crash handling,
//! determinism, and the eventual-synchrony bound.

use quorumlab::checkers::{self, TraceMeta};
use quorumlab::harness::run_scenario;
use quorumlab::protocols::{ProtocolConfig, ProtocolId};
use quorumlab::scenario::Scenario;
use quorumlab::sim::trace::EventKind;
use quorumlab::sim::{Simulation, StepResult};
use quorumlab::types::{NodeId, Payload, Tick};

const A: NodeId = NodeId(0);
const B: NodeId = NodeId(1);
const C: NodeId = NodeId(2);
const D: NodeId = NodeId(3);

fn ledger_bodies(sim: &Simulation, node: NodeId) -> Vec<String> {
    sim.ledger(node)
        .iter()
        .flat_map(|c| c.txs().into_iter().map(|p| p.body.clone()))
        .collect()
}

#[test]
fn empty_system_is_quiescent() {
    let scenario = Scenario::new(ProtocolId::RaftLite, 4, 7);
    let mut sim = Simulation::new(scenario).unwrap();
    assert_eq!(sim.step(), StepResult::Quiescent);
}

#[test]
fn malformed_scenarios_name_the_offending_field() {
    let mut s = Scenario::new(ProtocolId::PbftLite, 3, 0);
    s.crashes.insert(NodeId(9), Tick(5));
    let err = Simulation::new(s).unwrap_err();
    assert!(err.to_string().contains("faults.crash"), "{err}");
    assert!(err.to_string().contains('J'), "{err}");
}

#[test]
fn raft_three_nodes_commit_everywhere() {
    let s = Scenario::new(ProtocolId::RaftLite, 3, 1).submit(0, A, "tx-1");
    let out = run_scenario(&s).unwrap();
    assert!(out.all_passed(), "{:?}", out.verdicts);
    let meta = TraceMeta::of(&s);
    let ledgers = checkers::final_tx_ledgers(&out.trace, &meta);
    for node in [A, B, C] {
        assert_eq!(ledgers[&node], vec![Payload::new(A, "tx-1")]);
    }
}

#[test]
fn raft_leader_crash_retains_committed_entry() {
    // The first leader crashes mid-run; whatever it committed must survive
    // into the new view, and the run must still satisfy every checker.
    let mut s = Scenario::new(ProtocolId::RaftLite, 5, 3)
        .submit(0, A, "tx-1")
        .submit(30, B, "tx-2");
    s.horizon = Tick(400);
    // Nobody knows which node wins the first election under this seed, so
    // crash the node that the trace shows as the first leader: run once to
    // find it, then run the real scenario.
    let probe = run_scenario(&s).unwrap();
    let first_leader = probe
        .trace
        .events
        .iter()
        .find_map(|ev| match ev.kind {
            EventKind::ViewChange { .. } => Some(ev.node),
            _ => None,
        })
        .expect("someone wins the first election");
    s.crashes.insert(first_leader, Tick(25));
    if s.submissions.iter().any(|sub| sub.node == first_leader) {
        // keep submissions on correct nodes
        s.submissions.retain(|sub| sub.node != first_leader);
        s = s.submit(0, first_leader, "ignored").submit(0, C, "tx-1");
        s.submissions.retain(|sub| sub.node != first_leader);
    }
    let out = run_scenario(&s).unwrap();
    assert!(out.all_passed(), "{:?}", out.verdicts);
}

#[test]
fn raft_half_crashed_loses_liveness_keeps_safety() {
    // n=4 with 2 crashes (t = n/2): no majority remains, so no commits
    // after the crashes; agreement must still hold.
    let mut s = Scenario::new(ProtocolId::RaftLite, 4, 5)
        .submit(20, A, "tx-after-crash");
    s.crashes.insert(C, Tick(5));
    s.crashes.insert(D, Tick(6));
    s.horizon = Tick(300);
    let out = run_scenario(&s).unwrap();
    let meta = TraceMeta::of(&s);
    let agreement = checkers::check_agreement_total_order(&out.trace, &meta, 60);
    assert!(agreement.passed(), "{agreement}");
    let liveness = checkers::check_liveness(&out.trace, &meta, 60);
    assert!(liveness.failed(), "{liveness}");
    let ledgers = checkers::final_tx_ledgers(&out.trace, &meta);
    assert!(ledgers.values().all(|l| l.is_empty()));
}

#[test]
fn crashed_node_emits_nothing() {
    let mut s = Scenario::new(ProtocolId::RaftLite, 3, 2).submit(10, C, "tx-late");
    s.crashes.insert(C, Tick(4));
    let out = run_scenario(&s).unwrap();
    out.trace.validate_structure().unwrap();
    assert!(out
        .trace
        .events
        .iter()
        .all(|ev| ev.node != C || ev.time <= Tick(4)));
    // The submission to the crashed node produces no event at all.
    assert!(out.trace.submissions().count() == 0);
}

#[test]
fn same_payload_twice_yields_two_submissions() {
    let s = Scenario::new(ProtocolId::RaftLite, 3, 2)
        .submit(0, A, "tx-1")
        .submit(5, A, "tx-1");
    let out = run_scenario(&s).unwrap();
    assert_eq!(out.trace.submissions().count(), 2);
    // Deduplication is protocol business: it still commits only once.
    let meta = TraceMeta::of(&s);
    let v = checkers::check_validity_integrity(&out.trace, &meta, 60);
    assert!(v.passed(), "{v}");
}

#[test]
fn determinism_same_seed_same_trace() {
    for protocol in [
        ProtocolId::RaftLite,
        ProtocolId::TangaroaLite,
        ProtocolId::PbftLite,
        ProtocolId::Federated,
        ProtocolId::QuorumChain,
        ProtocolId::MultiChain,
        ProtocolId::RippleRounds,
    ] {
        let mut s = Scenario::new(protocol, 4, 42)
            .submit(0, A, "tx-1")
            .submit(7, B, "tx-2");
        if let ProtocolConfig::Mc(c) = &mut s.config {
            c.rho_pct = 25;
        }
        let one = run_scenario(&s).unwrap().trace.render();
        let two = run_scenario(&s).unwrap().trace.render();
        assert_eq!(one, two, "{protocol} diverged under one seed");
        let mut other = s.clone();
        other.seed = 43;
        let three = run_scenario(&other).unwrap().trace.render();
        assert_ne!(one, three, "{protocol} ignored the seed entirely");
    }
}

#[test]
fn eventual_synchrony_bound_holds_across_protocols() {
    for protocol in [
        ProtocolId::RaftLite,
        ProtocolId::PbftLite,
        ProtocolId::TangaroaLite,
        ProtocolId::Federated,
        ProtocolId::QuorumChain,
        ProtocolId::MultiChain,
        ProtocolId::RippleRounds,
    ] {
        for seed in 0..5 {
            let mut s = Scenario::new(protocol, 4, seed)
                .submit(0, A, "tx-1")
                .submit(3, C, "tx-2");
            s.net.gst = Tick(25);
            s.net.pre_async = true;
            if let ProtocolConfig::Mc(c) = &mut s.config {
                c.rho_pct = 25;
            }
            let out = run_scenario(&s).unwrap();
            out.trace.validate_structure().unwrap();
            let v = checkers::check_eventual_synchrony(&out.trace, &s);
            assert!(v.passed(), "{protocol} seed {seed}: {v}");
        }
    }
}

#[test]
fn pre_gst_delivery_never_exceeds_gst_plus_delta() {
    let mut s = Scenario::new(ProtocolId::RaftLite, 4, 9).submit(3, A, "tx-1");
    s.net.gst = Tick(10);
    s.net.delta = 2;
    s.net.pre_async = true;
    let out = run_scenario(&s).unwrap();
    let mut sends = std::collections::BTreeMap::new();
    for ev in &out.trace.events {
        match &ev.kind {
            EventKind::Send { env, .. } => {
                sends.insert(*env, ev.time);
            }
            EventKind::Deliver { env, .. } => {
                let sent = sends[env];
                let deadline = sent.max(Tick(10)) + 2;
                assert!(ev.time <= deadline, "send at {sent}, delivered {}", ev.time);
            }
            _ => {}
        }
    }
}

#[test]
fn tangaroa_fault_free_commits() {
    let s = Scenario::new(ProtocolId::TangaroaLite, 4, 4)
        .submit(0, B, "tx-1")
        .submit(5, C, "tx-2");
    let out = run_scenario(&s).unwrap();
    assert!(out.all_passed(), "{:?}", out.verdicts);
}

#[test]
fn pbft_fault_free_commits() {
    let s = Scenario::new(ProtocolId::PbftLite, 4, 4)
        .submit(0, B, "tx-1")
        .submit(5, C, "tx-2")
        .submit(9, A, "tx-3");
    let out = run_scenario(&s).unwrap();
    assert!(out.all_passed(), "{:?}", out.verdicts);
}

#[test]
fn pbft_silent_leader_is_replaced_and_commits_resume() {
    let mut s = Scenario::new(ProtocolId::PbftLite, 4, 4).submit(0, B, "tx-1");
    if let ProtocolConfig::Pbft(c) = &mut s.config {
        c.initial_view = 3; // leader D
    }
    s.byzantine.insert(
        D,
        quorumlab::adversary::Strategy::RushingSilentLeader, // silent on this protocol
    );
    let out = run_scenario(&s).unwrap();
    assert!(out.all_passed(), "{:?}", out.verdicts);
    // It really went through a view change.
    assert!(out
        .trace
        .events
        .iter()
        .any(|ev| matches!(ev.kind, EventKind::ViewChange { view } if view > 3)));
}

#[test]
fn federated_commits_with_one_refusing_signer() {
    let mut s = Scenario::new(ProtocolId::Federated, 4, 4).submit(0, B, "tx-1");
    s.byzantine
        .insert(D, quorumlab::adversary::Strategy::Passive);
    let out = run_scenario(&s).unwrap();
    assert!(out.all_passed(), "{:?}", out.verdicts);
}

#[test]
fn federated_generator_crash_halts() {
    let mut s = Scenario::new(ProtocolId::Federated, 4, 4).submit(10, B, "tx-1");
    s.crashes.insert(A, Tick(5)); // A is the default generator
    let out = run_scenario(&s).unwrap();
    let meta = TraceMeta::of(&s);
    assert!(checkers::check_liveness(&out.trace, &meta, 60).failed());
    assert!(checkers::check_agreement_total_order(&out.trace, &meta, 60).passed());
}

#[test]
fn quorumchain_single_maker_grows_one_chain() {
    let s = Scenario::new(ProtocolId::QuorumChain, 4, 4)
        .submit(0, B, "tx-1")
        .submit(14, C, "tx-2");
    let out = run_scenario(&s).unwrap();
    assert!(out.all_passed(), "{:?}", out.verdicts);
}

#[test]
fn quorumchain_maker_crash_halts() {
    let mut s = Scenario::new(ProtocolId::QuorumChain, 4, 4).submit(12, B, "tx-1");
    s.crashes.insert(A, Tick(5)); // A is the default (single) maker
    let out = run_scenario(&s).unwrap();
    let meta = TraceMeta::of(&s);
    assert!(checkers::check_liveness(&out.trace, &meta, 60).failed());
}

#[test]
fn multichain_all_honest_converges() {
    let s = quorumlab::adversary::scenarios::multichain_honest_scenario(4, 8);
    let out = run_scenario(&s).unwrap();
    assert!(out.all_passed(), "{:?}", out.verdicts);
}

#[test]
fn multichain_diversity_window_arithmetic() {
    let cfg = quorumlab::protocols::multichain::Config {
        rho_pct: 50,
        list_len: Some(10),
        mine_delay: (6, 14),
    };
    assert_eq!(cfg.window(10), 5);
    let cfg = quorumlab::protocols::multichain::Config {
        rho_pct: 25,
        list_len: None,
        mine_delay: (6, 14),
    };
    assert_eq!(cfg.window(5), 2);
}

#[test]
fn ripple_full_overlap_closes_identically() {
    let s = Scenario::new(ProtocolId::RippleRounds, 5, 4)
        .submit(0, A, "entry-1")
        .submit(120, B, "entry-2");
    let mut s = s;
    s.horizon = Tick(400);
    s.checks.liveness = Some(100);
    let out = run_scenario(&s).unwrap();
    assert!(out.all_passed(), "{:?}", out.verdicts);
    let meta = TraceMeta::of(&s);
    let ledgers = checkers::final_tx_ledgers(&out.trace, &meta);
    let first = &ledgers[&A];
    assert_eq!(first.len(), 2);
    for l in ledgers.values() {
        assert_eq!(l, first);
    }
}

#[test]
fn submit_validation_rejects_unknown_node_and_past_time() {
    let scenario = Scenario::new(ProtocolId::RaftLite, 3, 0);
    let mut sim = Simulation::new(scenario).unwrap();
    assert!(sim.submit_tx(NodeId(7), "tx", Tick(5)).is_err());
    sim.submit_tx(A, "tx", Tick(0)).unwrap();
    while sim.step() != StepResult::Quiescent {}
    assert!(sim.submit_tx(A, "tx2", Tick(0)).is_err(), "time in the past");
    let _ = ledger_bodies(&sim, A);
}
