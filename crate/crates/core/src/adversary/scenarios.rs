//! Packaged, deterministic counterexample scenarios. Each returns a full
//! scenario (seed, schedule directives, fault plan) so a single `run`
//! reproduces the attack; the directed schedules are expressed as hold
//! rules, so replays stay inside the eventual-synchrony model.

use crate::adversary::Strategy;
use crate::protocols::{ProtocolConfig, ProtocolId};
use crate::scenario::{RuleAction, Scenario, ScheduleRule};
use crate::types::{NodeId, Tick};

const A: NodeId = NodeId(0);
const B: NodeId = NodeId(1);
const C: NodeId = NodeId(2);
const D: NodeId = NodeId(3);

fn hold(from: Option<NodeId>, to: Option<NodeId>, sent_from: u64) -> ScheduleRule {
    ScheduleRule {
        from,
        to,
        sent_from: Tick(sent_from),
        sent_until: Tick(1_000_000),
        action: RuleAction::HoldUntil(Tick(1_000_000)),
    }
}

fn constant_delay(d: u64) -> ScheduleRule {
    ScheduleRule {
        from: None,
        to: None,
        sent_from: Tick(0),
        sent_until: Tick(1_000_000),
        action: RuleAction::Delay(d),
    }
}

/// The split-commit attack on single-echo-round replication: the faulty
/// starting leader `D` replicates `m` so that one victim commits it, forces
/// nothing else through, and lets a leader change happen while the victim
/// is unreachable. The new leader cannot learn about `m` and proposes its
/// own payload for the same slot.
///
/// On the flawed protocol the run commits conflicting payloads at the same
/// height; the identical schedule against the three-phase protocol recovers
/// `m` through view-change certificates and passes every checker. The
/// crash-only variant replaces the adversary with a plain crash of `D`.
pub fn leader_equivocation_scenario(protocol: ProtocolId) -> Scenario {
    let mut s = Scenario::new(protocol, 4, 7);
    s.name = format!("leader-equivocation-{protocol}");
    s.horizon = Tick(200);
    s.net.gst = Tick(60);
    s.net.delta = 4;
    s.net.min_delay = 1;
    s.rules = vec![
        hold(Some(A), None, 4),
        hold(None, Some(A), 4),
        constant_delay(1),
    ];
    match (&mut s.config, protocol) {
        (ProtocolConfig::Tangaroa(c), _) => {
            c.initial_leader = Some(D);
            c.election_timeout = (12, 20);
            s.byzantine.insert(
                D,
                Strategy::EquivocatingLeader {
                    m: "m".into(),
                    m2: "m-prime".into(),
                },
            );
        }
        (ProtocolConfig::Pbft(c), _) => {
            c.initial_view = 3; // leader of the starting view is D
            s.byzantine.insert(
                D,
                Strategy::EquivocatingLeader {
                    m: "m".into(),
                    m2: "m-prime".into(),
                },
            );
        }
        (_, ProtocolId::RaftLite) => {
            // Crash-only degradation of the same shape: the leader-to-be
            // crashes mid-run instead of equivocating.
            s.crashes.insert(D, Tick(30));
        }
        _ => {}
    }
    s = s.submit(0, C, "m-prime");
    if protocol == ProtocolId::RaftLite {
        s = s.submit(0, D, "m");
    }
    s
}

/// The election-rushing liveness attack: any node may self-nominate and
/// votes cannot audit timeouts, so the adversary wins every election the
/// moment a view opens and then orders nothing. Delays are pinned to a
/// constant so the race is decided identically on every run.
pub fn rushing_scenario(protocol: ProtocolId) -> Scenario {
    let mut s = Scenario::new(protocol, 4, 11);
    s.name = format!("rushing-leader-{protocol}");
    s.horizon = Tick(200); // = GST + 200
    s.net.gst = Tick(0);
    s.net.delta = 2;
    s.net.min_delay = 2;
    match &mut s.config {
        ProtocolConfig::Tangaroa(c) => {
            c.initial_leader = None;
            c.election_timeout = (10, 18);
        }
        ProtocolConfig::Pbft(c) => {
            c.initial_view = 3; // the silent adversary leads first
        }
        _ => {}
    }
    s.byzantine.insert(D, Strategy::RushingSilentLeader);
    s.submit(0, A, "tx-1").submit(1, B, "tx-2").submit(2, C, "tx-3")
}

/// Two honest block-makers, an operator-set vote threshold, and asymmetric
/// delivery: both proposals clear the threshold on different nodes before
/// either hears of the competing votes, and the chain forks with every node
/// honest.
pub fn quorumchain_two_maker_fork_scenario() -> Scenario {
    let mut s = Scenario::new(ProtocolId::QuorumChain, 4, 3);
    s.name = "quorumchain-two-maker-fork".into();
    s.horizon = Tick(150);
    s.net.gst = Tick(500_000); // asynchronous throughout the run
    s.net.delta = 4;
    s.net.min_delay = 1;
    if let ProtocolConfig::Qc(c) = &mut s.config {
        c.makers = vec![A, B];
        c.threshold = 2;
        c.window = 10;
        c.propose_delay = (4, 4);
    }
    s.rules = vec![
        hold(Some(A), Some(D), 0),
        hold(Some(B), Some(A), 0),
        constant_delay(1),
    ];
    s.checks.validity = false;
    s.checks.liveness = None;
    s.submit(0, A, "tx-a").submit(0, B, "tx-b")
}

/// A single subverted miner builds a private chain and releases it once it
/// is strictly longer than the honest one; every honest node reorganizes
/// and committed history deeper than the confirmation depth is reverted.
/// The diversity parameter is zero, matching the favorable-for-the-attack
/// premise: the window never blocks the attacker's own blocks.
pub fn multichain_takeover_scenario() -> Scenario {
    let mut s = Scenario::new(ProtocolId::MultiChain, 4, 5);
    s.name = "multichain-takeover".into();
    s.horizon = Tick(260);
    s.net.gst = Tick(0);
    s.net.delta = 2;
    s.net.min_delay = 1;
    if let ProtocolConfig::Mc(c) = &mut s.config {
        c.rho_pct = 0;
        c.mine_delay = (6, 10);
    }
    s.byzantine
        .insert(D, Strategy::LongestChainTakeover { lead: 8 });
    s.checks.common_prefix = Some(6);
    s.checks.liveness = Some(80);
    let mut out = s;
    for i in 0..10u64 {
        let node = [A, B, C][(i % 3) as usize];
        out = out.submit(2 + 8 * i, node, &format!("tx-{i}"));
    }
    out
}

/// Honest all-honest run used as the non-final safety baseline.
pub fn multichain_honest_scenario(n: usize, seed: u64) -> Scenario {
    let mut s = Scenario::new(ProtocolId::MultiChain, n, seed);
    s.name = format!("multichain-honest-n{n}-s{seed}");
    s.horizon = Tick(300);
    s.net.delta = 2;
    if let ProtocolConfig::Mc(c) = &mut s.config {
        c.rho_pct = 25;
        c.mine_delay = (6, 14);
    }
    s.checks.common_prefix = Some(6);
    s.checks.liveness = Some(80);
    let mut out = s;
    for i in 0..6u64 {
        let node = NodeId((i % n as u64) as u8);
        out = out.submit(2 + 10 * i, node, &format!("tx-{i}"));
    }
    out
}

/// Two validator cliques whose trust lists do not overlap close conflicting
/// ledger entries: the split-brain the overlap condition rules out.
pub fn ripple_two_cliques_scenario() -> Scenario {
    let mut s = Scenario::new(ProtocolId::RippleRounds, 6, 2);
    s.name = "ripple-two-cliques".into();
    s.horizon = Tick(260);
    s.net.gst = Tick(0);
    s.net.delta = 2;
    if let ProtocolConfig::Ripple(c) = &mut s.config {
        let clique1 = vec![A, B, C];
        let clique2 = vec![D, NodeId(4), NodeId(5)];
        for v in &clique1 {
            c.unl.insert(*v, clique1.clone());
        }
        for v in &clique2 {
            c.unl.insert(*v, clique2.clone());
        }
    }
    s.checks.liveness = None;
    s.submit(0, A, "entry-m").submit(0, D, "entry-m2")
}

// ----------------------------------------------------------------------
// exploration fixtures
// ----------------------------------------------------------------------

/// Exploration view of the split-commit setting: faulty starting leader
/// with payload alphabet {m, m-prime}, one honest submission at C, and a
/// fully adversarial network (GST beyond any explored step).
pub fn explore_split_commit_scenario(protocol: ProtocolId) -> Scenario {
    let mut s = Scenario::new(protocol, 4, 0);
    s.name = format!("explore-split-commit-{protocol}");
    s.horizon = Tick(1_000_000);
    s.net.gst = Tick(900_000);
    s.net.delta = 4;
    match &mut s.config {
        ProtocolConfig::Tangaroa(c) => {
            c.initial_leader = Some(D);
            c.election_timeout = (10, 10);
        }
        ProtocolConfig::Pbft(c) => {
            c.initial_view = 3;
        }
        _ => {}
    }
    s.byzantine.insert(
        D,
        Strategy::EquivocatingLeader {
            m: "m".into(),
            m2: "m-prime".into(),
        },
    );
    s.submit(0, C, "m-prime")
}

/// Exploration fixture for the bare broadcast primitives with a faulty
/// sender and alphabet {m, m2}.
pub fn explore_bcast_scenario(protocol: ProtocolId) -> Scenario {
    let mut s = Scenario::new(protocol, 4, 0);
    s.name = format!("explore-{protocol}-faulty-sender");
    s.horizon = Tick(1_000_000);
    s.net.gst = Tick(900_000);
    if let ProtocolConfig::Bcast(c) = &mut s.config {
        c.sender = D;
    }
    s.byzantine.insert(
        D,
        Strategy::EquivocatingLeader {
            m: "m".into(),
            m2: "m2".into(),
        },
    );
    s.checks.liveness = None;
    s
}

/// Exploration fixture for trust-list configurations: candidate `m` enters
/// at the first clique, `m2` at the second.
pub fn explore_ripple_scenario(
    unl: &[(NodeId, Vec<NodeId>)],
    n: usize,
    submit_m: NodeId,
    submit_m2: NodeId,
) -> Scenario {
    let mut s = Scenario::new(ProtocolId::RippleRounds, n, 0);
    s.name = "explore-ripple-overlap".into();
    s.horizon = Tick(1_000_000);
    s.net.gst = Tick(900_000);
    if let ProtocolConfig::Ripple(c) = &mut s.config {
        for (node, list) in unl {
            c.unl.insert(*node, list.clone());
        }
    }
    s.checks.liveness = None;
    s.submit(0, submit_m, "m").submit(0, submit_m2, "m2")
}
