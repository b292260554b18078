//! Bounded exhaustive schedule exploration: the oracle behind "there exists
//! a schedule" and "no schedule within bounds" claims.
//!
//! The explorer owns every source of nondeterminism: it picks which channel
//! to advance or timer to fire next (depth counts these steps), and it
//! drives adversarial nodes from finite templates of protocol-well-formed
//! messages over the scenario's payload alphabet plus silence. An emission
//! is applied together with its delivery — the adversary can always wait,
//! so emitting early and delivering late explores nothing new — and is
//! budgeted separately from depth.
//!
//! Messages between one ordered pair of nodes form a FIFO channel; the
//! adversary chooses freely which channel to advance (or to starve) at
//! every step, which is exactly the power the replayed attacks need, but it
//! cannot reorder two messages within one channel. Deliveries to
//! adversarial nodes only grow their knowledge and never touch correct
//! state, so they are absorbed eagerly instead of branching, and envelopes
//! whose delivery is provably dead forever (the per-protocol monotone
//! predicate) are dropped. Search is depth-first with memoization on a
//! state fingerprint. Every witness replays through the simulator to a full
//! trace, so checkers can re-verify it independently.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{Hash, Hasher};

use crate::protocols::{pbft, ripple, tangaroa, Action, ProtocolConfig, ProtocolMsg};
use crate::broadcast::BcastMsg;
use crate::scenario::Scenario;
use crate::sim::{Queued, Role, Simulation};
use crate::types::{NodeId, Payload};

/// Search bounds. `depth` counts deliveries and timer fires; adversarial
/// emissions are limited by `max_emissions` and are free of depth;
/// `max_states` caps the memo table as a hard budget.
#[derive(Clone, Debug)]
pub struct Bounds {
    pub depth: u32,
    pub max_emissions: u32,
    pub max_states: u64,
    /// How many views past the starting one templates may address.
    pub extra_views: u64,
    /// Slots templates may address (0..max_slots).
    pub max_slots: u64,
}

impl Default for Bounds {
    fn default() -> Bounds {
        Bounds {
            depth: 20,
            max_emissions: 8,
            max_states: 4_000_000,
            extra_views: 1,
            max_slots: 1,
        }
    }
}

/// What counts as the searched-for event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Two correct nodes committed different payloads at the same position.
    ConflictingCommits,
    /// A quiet state (nothing pending) where one correct node committed and
    /// another has not: the delivery gap consistent broadcast permits.
    TerminalPartialDelivery,
    /// Either of the above; what reliable broadcast must never allow.
    ConsistencyAndTotality,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Choice {
    /// Deliver the pending envelope with this content (lowest sequence
    /// number among identical copies) or fire this timer.
    Fire(FireKey),
    /// Adversarial emission, applied together with its delivery.
    Emit {
        from: NodeId,
        to: NodeId,
        msg: ProtocolMsg,
    },
}

/// Stable identity of a firable step for replay purposes. Advancing a
/// channel delivers its oldest pending envelope.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FireKey {
    Advance { from: NodeId, to: NodeId },
    Timer {
        node: NodeId,
        kind: crate::protocols::TimerKind,
    },
}

#[derive(Clone, Debug)]
pub enum ExploreOutcome {
    /// The target was reached; the choice list replays to `trace`.
    Witness {
        choices: Vec<Choice>,
        trace: crate::sim::trace::Trace,
        description: String,
    },
    /// Everything within the bounds was explored without hitting the
    /// target.
    Clean { states: u64, steps: u64 },
    /// The state budget ran out before the bound was covered: explicitly
    /// inconclusive, never a silent pass.
    OutOfBudget { states: u64 },
}

impl ExploreOutcome {
    pub fn found(&self) -> bool {
        matches!(self, ExploreOutcome::Witness { .. })
    }

    pub fn summary(&self) -> String {
        match self {
            ExploreOutcome::Witness {
                choices,
                description,
                ..
            } => format!("witness found after {} choices: {description}", choices.len()),
            ExploreOutcome::Clean { states, steps } => {
                format!("no witness within bounds ({states} states, {steps} steps)")
            }
            ExploreOutcome::OutOfBudget { states } => {
                format!("inconclusive: state budget exhausted at {states} states")
            }
        }
    }
}

struct Search {
    bounds: Bounds,
    target: Target,
    memo: HashMap<u64, (u32, u32)>,
    states: u64,
    steps: u64,
    base_view: u64,
    alphabet: Vec<String>,
}

/// Explores all schedules of `scenario` within `bounds`, hunting `target`.
pub fn explore(scenario: &Scenario, bounds: Bounds, target: Target) -> ExploreOutcome {
    let mut sim = Simulation::new_exploration(scenario.clone())
        .expect("exploration scenario must validate");
    sim.record = false;

    let base_view = match &scenario.config {
        ProtocolConfig::Tangaroa(_) => 1,
        ProtocolConfig::Pbft(c) => c.initial_view,
        _ => 0,
    };
    let mut alphabet: BTreeSet<String> = BTreeSet::new();
    for strat in scenario.byzantine.values() {
        match strat {
            super::Strategy::EquivocatingLeader { m, m2 }
            | super::Strategy::ForkingGenerator { m, m2 }
            | super::Strategy::ConflictingProposer { m, m2 } => {
                alphabet.insert(m.clone());
                alphabet.insert(m2.clone());
            }
            _ => {}
        }
    }
    if alphabet.is_empty() && !scenario.byzantine.is_empty() {
        alphabet.insert("m".into());
        alphabet.insert("m2".into());
    }

    let mut search = Search {
        bounds,
        target,
        memo: HashMap::new(),
        states: 0,
        steps: 0,
        base_view,
        alphabet: alphabet.into_iter().collect(),
    };
    normalize(&mut sim);

    // Iterative deepening: witnesses surface at their natural depth long
    // before the full bound's state space is due, and the shallower
    // exhaustions cost a geometric fraction of the final pass.
    let full_depth = search.bounds.depth;
    let full_emissions = search.bounds.max_emissions;
    let mut total_states = 0;
    let mut total_steps = 0;
    let mut depth = 6.min(full_depth);
    let mut emissions = 3.min(full_emissions);
    loop {
        search.memo.clear();
        search.states = 0;
        search.steps = 0;
        let mut emitted: BTreeSet<(NodeId, NodeId, ProtocolMsg)> = BTreeSet::new();
        let mut path: Vec<Choice> = Vec::new();
        let result = search.dfs(&sim, depth, emissions, &mut emitted, &mut path);
        total_states += search.states;
        total_steps += search.steps;
        match result {
            DfsResult::Found(description) => {
                let trace = replay(scenario, &path);
                let description =
                    format!("{description} [{total_states} states searched]");
                return ExploreOutcome::Witness {
                    choices: path,
                    trace,
                    description,
                };
            }
            DfsResult::Budget => {
                return ExploreOutcome::OutOfBudget {
                    states: total_states,
                };
            }
            DfsResult::Exhausted => {
                if depth >= full_depth && emissions >= full_emissions {
                    return ExploreOutcome::Clean {
                        states: total_states,
                        steps: total_steps,
                    };
                }
                depth = (depth + 4).min(full_depth);
                emissions = (emissions + 1).min(full_emissions);
            }
        }
    }
}

/// Re-runs a witness choice list through a recording simulation.
pub fn replay(scenario: &Scenario, choices: &[Choice]) -> crate::sim::trace::Trace {
    let mut sim = Simulation::new_exploration(scenario.clone())
        .expect("exploration scenario must validate");
    normalize(&mut sim);
    for choice in choices {
        apply_choice(&mut sim, choice);
        normalize(&mut sim);
    }
    sim.into_trace()
}

enum DfsResult {
    Found(String),
    Exhausted,
    Budget,
}

impl Search {
    fn dfs(
        &mut self,
        sim: &Simulation,
        depth: u32,
        emissions: u32,
        emitted: &mut BTreeSet<(NodeId, NodeId, ProtocolMsg)>,
        path: &mut Vec<Choice>,
    ) -> DfsResult {
        if let Some(desc) = self.violation(sim) {
            return DfsResult::Found(desc);
        }
        if self.states >= self.bounds.max_states {
            return DfsResult::Budget;
        }
        let fp = fingerprint(sim);
        if let Some(&(d, e)) = self.memo.get(&fp) {
            if d >= depth && e >= emissions {
                return DfsResult::Exhausted;
            }
        }
        self.memo.insert(fp, (depth, emissions));
        self.states += 1;

        let mut budget_hit = false;

        // Emissions first: they are depth-free and open attack branches
        // early. Each emission is delivered on the spot.
        if emissions > 0 {
            for (from, to, msg) in self.emission_candidates(sim) {
                let key = (from, to, msg.clone());
                if emitted.contains(&key) {
                    continue;
                }
                // Emitting something the receiver can never use is pure
                // waste; the dead predicate is monotone, so skipping is
                // sound.
                if let Role::Correct(r) = &sim.nodes[to.index()].role {
                    if r.dead_message(from, &msg) {
                        continue;
                    }
                }
                let mut next = sim.clone();
                emit_and_deliver(&mut next, from, to, msg.clone());
                normalize(&mut next);
                emitted.insert(key.clone());
                path.push(Choice::Emit { from, to, msg });
                match self.dfs(&next, depth, emissions - 1, emitted, path) {
                    DfsResult::Found(d) => return DfsResult::Found(d),
                    DfsResult::Budget => budget_hit = true,
                    DfsResult::Exhausted => {}
                }
                path.pop();
                emitted.remove(&key);
            }
        }

        if depth > 0 {
            for key in fire_choices(sim) {
                let mut next = sim.clone();
                self.steps += 1;
                fire(&mut next, &key);
                normalize(&mut next);
                path.push(Choice::Fire(key));
                match self.dfs(&next, depth - 1, emissions, emitted, path) {
                    DfsResult::Found(d) => return DfsResult::Found(d),
                    DfsResult::Budget => budget_hit = true,
                    DfsResult::Exhausted => {}
                }
                path.pop();
            }
        }

        if budget_hit {
            DfsResult::Budget
        } else {
            DfsResult::Exhausted
        }
    }

    fn violation(&self, sim: &Simulation) -> Option<String> {
        let correct = sim.correct_nodes();
        if matches!(
            self.target,
            Target::ConflictingCommits | Target::ConsistencyAndTotality
        ) {
            for (i, a) in correct.iter().enumerate() {
                for b in correct.iter().skip(i + 1) {
                    let la = sim.ledger(*a);
                    let lb = sim.ledger(*b);
                    for k in 0..la.len().min(lb.len()) {
                        if la[k] != lb[k] {
                            return Some(format!(
                                "conflicting commits at position {k}: {a} has {} while {b} has {}",
                                la[k], lb[k]
                            ));
                        }
                    }
                }
            }
        }
        if matches!(
            self.target,
            Target::TerminalPartialDelivery | Target::ConsistencyAndTotality
        ) && quiet(sim)
        {
            let delivered: Vec<(NodeId, usize)> = correct
                .iter()
                .map(|n| (*n, sim.ledger(*n).len()))
                .collect();
            let max = delivered.iter().map(|(_, l)| *l).max().unwrap_or(0);
            let min = delivered.iter().map(|(_, l)| *l).min().unwrap_or(0);
            if max > min {
                let haves: Vec<String> = delivered
                    .iter()
                    .filter(|(_, l)| *l == max)
                    .map(|(n, _)| n.to_string())
                    .collect();
                let nots: Vec<String> = delivered
                    .iter()
                    .filter(|(_, l)| *l < max)
                    .map(|(n, _)| n.to_string())
                    .collect();
                return Some(format!(
                    "quiet state with partial delivery: {} delivered, {} did not",
                    haves.join(","),
                    nots.join(",")
                ));
            }
        }
        None
    }

    fn emission_candidates(&self, sim: &Simulation) -> Vec<(NodeId, NodeId, ProtocolMsg)> {
        let mut out = Vec::new();
        let correct = sim.correct_nodes();
        for (i, node) in sim.nodes.iter().enumerate() {
            let Role::Byzantine(driver) = &node.role else {
                continue;
            };
            let me = NodeId::from_index(i);
            let payloads = self.payload_alphabet(me, driver);
            match &sim.scenario().config {
                ProtocolConfig::Tangaroa(_) => {
                    let views = self.base_view..=self.base_view + self.bounds.extra_views;
                    for view in views {
                        for slot in 0..self.bounds.max_slots {
                            for p in &payloads {
                                for to in &correct {
                                    out.push((
                                        me,
                                        *to,
                                        ProtocolMsg::Tangaroa(tangaroa::Msg::Append {
                                            view,
                                            slot,
                                            tx: p.clone(),
                                        }),
                                    ));
                                    out.push((
                                        me,
                                        *to,
                                        ProtocolMsg::Tangaroa(tangaroa::Msg::Echo {
                                            view,
                                            slot,
                                            tx: p.clone(),
                                        }),
                                    ));
                                }
                            }
                        }
                        for to in &correct {
                            out.push((
                                me,
                                *to,
                                ProtocolMsg::Tangaroa(tangaroa::Msg::Nominate { view }),
                            ));
                            // A vote only helps the node that asked for it.
                            if driver.knowledge.nominations.contains(&(view, *to)) {
                                out.push((
                                    me,
                                    *to,
                                    ProtocolMsg::Tangaroa(tangaroa::Msg::Vote { view }),
                                ));
                            }
                        }
                        // Leadership claim, only with genuinely gathered votes.
                        if let Some(votes) = driver.knowledge.votes.get(&view) {
                            let mut votes = votes.clone();
                            votes.insert(me);
                            if votes.len() >= sim.scenario().n / 2 + 1 {
                                for to in &correct {
                                    out.push((
                                        me,
                                        *to,
                                        ProtocolMsg::Tangaroa(tangaroa::Msg::NewLeader {
                                            view,
                                            votes: votes.clone(),
                                        }),
                                    ));
                                }
                            }
                        }
                    }
                }
                ProtocolConfig::Pbft(_) => {
                    let views = self.base_view..=self.base_view + self.bounds.extra_views;
                    for view in views {
                        for slot in 0..self.bounds.max_slots {
                            for p in &payloads {
                                let val = pbft::SlotValue::Tx(p.clone());
                                for to in &correct {
                                    out.push((
                                        me,
                                        *to,
                                        ProtocolMsg::Pbft(pbft::Msg::PrePrepare {
                                            view,
                                            slot,
                                            tx: p.clone(),
                                        }),
                                    ));
                                    out.push((
                                        me,
                                        *to,
                                        ProtocolMsg::Pbft(pbft::Msg::Prepare {
                                            view,
                                            slot,
                                            value: val.clone(),
                                        }),
                                    ));
                                    out.push((
                                        me,
                                        *to,
                                        ProtocolMsg::Pbft(pbft::Msg::CommitVote {
                                            view,
                                            slot,
                                            value: val.clone(),
                                        }),
                                    ));
                                }
                            }
                        }
                        // View-change reports: empty, or exactly what the
                        // knowledge base can certify.
                        let mut variants: Vec<Vec<pbft::PreparedCert>> = vec![Vec::new()];
                        let certified = certs_from_knowledge(driver, sim.scenario().n);
                        if !certified.is_empty() {
                            variants.push(certified);
                        }
                        for prepared in variants {
                            for to in &correct {
                                out.push((
                                    me,
                                    *to,
                                    ProtocolMsg::Pbft(pbft::Msg::ViewChange {
                                        view,
                                        prepared: prepared.clone(),
                                    }),
                                ));
                            }
                        }
                    }
                }
                ProtocolConfig::Bcast(_) => {
                    for p in &payloads {
                        for to in &correct {
                            out.push((me, *to, ProtocolMsg::Bcast(BcastMsg::Send(p.clone()))));
                            out.push((me, *to, ProtocolMsg::Bcast(BcastMsg::Echo(p.clone()))));
                            out.push((me, *to, ProtocolMsg::Bcast(BcastMsg::Ready(p.clone()))));
                        }
                    }
                }
                ProtocolConfig::Ripple(_) => {
                    for round in 1..=ripple::ROUND_THRESHOLDS_PCT.len() as u8 {
                        for p in &payloads {
                            for to in &correct {
                                out.push((
                                    me,
                                    *to,
                                    ProtocolMsg::Ripple(ripple::Msg::Proposal {
                                        seq: 0,
                                        round,
                                        value: p.clone(),
                                    }),
                                ));
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    fn payload_alphabet(&self, me: NodeId, driver: &super::ByzDriver) -> Vec<Payload> {
        let mut set: BTreeSet<Payload> = self
            .alphabet
            .iter()
            .map(|b| Payload::new(me, b.clone()))
            .collect();
        for p in &driver.knowledge.payloads {
            set.insert(p.clone());
        }
        set.into_iter().collect()
    }
}

fn quiet(sim: &Simulation) -> bool {
    sim.queue.values().all(|q| match q {
        Queued::Deliver { .. } | Queued::Timer { .. } | Queued::Submit { .. } => false,
        Queued::Crash { .. } => true,
    })
}

/// Distinct firable choices: one per non-empty channel plus every live
/// timer, in deterministic order.
fn fire_choices(sim: &Simulation) -> Vec<FireKey> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for q in sim.queue.values() {
        match q {
            Queued::Deliver { env } => {
                let key = FireKey::Advance {
                    from: env.from,
                    to: env.to,
                };
                if seen.insert(key.clone()) {
                    out.push(key);
                }
            }
            Queued::Timer { node, kind, gen } => {
                if sim.timer_live(*node, *kind, *gen) {
                    let key = FireKey::Timer {
                        node: *node,
                        kind: *kind,
                    };
                    if seen.insert(key.clone()) {
                        out.push(key);
                    }
                }
            }
            Queued::Submit { .. } | Queued::Crash { .. } => {}
        }
    }
    out
}

fn fire(sim: &mut Simulation, key: &FireKey) {
    let found = match key {
        FireKey::Advance { from, to } => sim
            .queue
            .iter()
            .filter_map(|(k, q)| match q {
                Queued::Deliver { env } if env.from == *from && env.to == *to => Some(*k),
                _ => None,
            })
            .min_by_key(|k| k.2),
        FireKey::Timer { node, kind } => sim.queue.iter().find_map(|(k, q)| match q {
            Queued::Timer {
                node: qn,
                kind: qk,
                gen,
            } if qn == node && qk == kind && sim.timer_live(*qn, *qk, *gen) => Some(*k),
            _ => None,
        }),
    };
    if let Some(k) = found {
        let item = sim.queue.remove(&k).expect("key present");
        sim.now = sim.now.max(k.0);
        sim.apply_queued(item);
    }
}

/// Normalization between choices: deliveries to adversarial nodes never
/// affect correct state, so they are applied immediately; submissions and
/// crashes scheduled at construction are applied as well; and envelopes
/// whose delivery is dead forever (per the protocol's monotone predicate)
/// are dropped without a step.
fn normalize(sim: &mut Simulation) {
    loop {
        let key = sim.queue.iter().find_map(|(k, q)| match q {
            Queued::Deliver { env } => match &sim.nodes[env.to.index()].role {
                Role::Byzantine(_) => Some((*k, false)),
                Role::Correct(r) => {
                    if r.dead_message(env.from, &env.msg) {
                        Some((*k, true))
                    } else {
                        None
                    }
                }
            },
            Queued::Submit { .. } | Queued::Crash { .. } => Some((*k, false)),
            Queued::Timer { .. } => None,
        });
        let Some((k, drop_it)) = key else { break };
        let item = sim.queue.remove(&k).expect("key present");
        if drop_it {
            continue;
        }
        sim.now = sim.now.max(k.0);
        sim.apply_queued(item);
    }
}

/// Emission fused with its delivery: the envelope is created (recording the
/// send) and handed to the receiver in the same step. Adversarial channels
/// carry no other traffic (templates are the node's only output), so this
/// respects channel order.
fn emit_and_deliver(sim: &mut Simulation, from: NodeId, to: NodeId, msg: ProtocolMsg) {
    sim.apply_actions(
        from,
        vec![Action::Send {
            to,
            msg: msg.clone(),
        }],
    );
    let fresh = sim.seq;
    let key = sim
        .queue
        .iter()
        .find_map(|(k, q)| match q {
            Queued::Deliver { env } if env.seq == fresh => Some(*k),
            _ => None,
        })
        .expect("emission was just queued");
    let item = sim.queue.remove(&key).expect("key present");
    sim.now = sim.now.max(key.0);
    sim.apply_queued(item);
}

fn apply_choice(sim: &mut Simulation, choice: &Choice) {
    match choice {
        Choice::Fire(key) => fire(sim, key),
        Choice::Emit { from, to, msg } => {
            emit_and_deliver(sim, *from, *to, msg.clone());
        }
    }
}

fn fingerprint(sim: &Simulation) -> u64 {
    let mut h = DefaultHasher::new();
    for (i, node) in sim.nodes.iter().enumerate() {
        i.hash(&mut h);
        node.crashed.hash(&mut h);
        match &node.role {
            Role::Correct(r) => r.hash(&mut h),
            Role::Byzantine(d) => d.knowledge.hash(&mut h),
        }
    }
    let mut pending: Vec<(NodeId, NodeId, u64, &ProtocolMsg)> = Vec::new();
    let mut timers: Vec<(NodeId, crate::protocols::TimerKind)> = Vec::new();
    for q in sim.queue.values() {
        match q {
            Queued::Deliver { env } => pending.push((env.from, env.to, env.seq, &env.msg)),
            Queued::Timer { node, kind, gen } => {
                if sim.timer_live(*node, *kind, *gen) {
                    timers.push((*node, *kind));
                }
            }
            _ => {}
        }
    }
    // Channel-ordered: sequence numbers fix intra-channel order but are
    // excluded from the hash themselves.
    pending.sort();
    for (from, to, _, msg) in &pending {
        (from, to, msg).hash(&mut h);
    }
    timers.sort();
    timers.dedup();
    timers.hash(&mut h);
    h.finish()
}

/// Certificates an adversarial node can honestly assemble from received
/// prepares: per slot, the highest-view value with an echo quorum.
fn certs_from_knowledge(driver: &super::ByzDriver, n: usize) -> Vec<pbft::PreparedCert> {
    let f = n.saturating_sub(1) / 3;
    let quorum = (n + f) / 2 + 1;
    let mut best: BTreeMap<u64, pbft::PreparedCert> = BTreeMap::new();
    for ((view, slot, value), attesters) in &driver.knowledge.prepares {
        if attesters.len() < quorum {
            continue;
        }
        let cert = pbft::PreparedCert {
            view: *view,
            slot: *slot,
            value: value.clone(),
            attesters: attesters.clone(),
        };
        match best.get(slot) {
            Some(prev) if prev.view >= cert.view => {}
            _ => {
                best.insert(*slot, cert);
            }
        }
    }
    best.into_values().collect()
}
