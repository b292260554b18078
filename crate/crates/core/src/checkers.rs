//! Trace oracles for the atomic-broadcast properties (validity, agreement,
//! integrity, total order), external validity, liveness after GST, and the
//! non-final common-prefix notion used by longest-chain protocols.
//!
//! Checkers are pure functions of a completed trace. A fail verdict always
//! carries a witness: a small subset of trace events that itself violates
//! the property definition. "Eventually" is operationalized as "by horizon
//! >= GST + slack"; runs that are too short return inconclusive instead of
//! a verdict either way.

use std::collections::BTreeMap;
use std::fmt;

use crate::protocols::CommitPayload;
use crate::scenario::Scenario;
use crate::sim::trace::{EventKind, Trace, TraceEvent};
use crate::types::{NodeId, Payload, Tick};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive { reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub property: String,
    pub outcome: Outcome,
    pub witness: Vec<TraceEvent>,
}

impl Verdict {
    fn pass(property: &str) -> Verdict {
        Verdict {
            property: property.into(),
            outcome: Outcome::Pass,
            witness: Vec::new(),
        }
    }

    fn fail(property: &str, witness: Vec<TraceEvent>) -> Verdict {
        Verdict {
            property: property.into(),
            outcome: Outcome::Fail,
            witness,
        }
    }

    fn inconclusive(property: &str, reason: impl Into<String>) -> Verdict {
        Verdict {
            property: property.into(),
            outcome: Outcome::Inconclusive {
                reason: reason.into(),
            },
            witness: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    pub fn failed(&self) -> bool {
        self.outcome == Outcome::Fail
    }

    /// Trace-format witness lines prefixed by a one-line summary record.
    pub fn render(&self) -> String {
        let mut s = self.to_string();
        s.push('\n');
        for ev in &self.witness {
            s.push_str(&format!("  {ev}\n"));
        }
        s
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.outcome {
            Outcome::Pass => write!(f, "PASS {}", self.property),
            Outcome::Fail => write!(f, "FAIL {}", self.property),
            Outcome::Inconclusive { reason } => {
                write!(f, "INCONCLUSIVE {} ({reason})", self.property)
            }
        }
    }
}

/// Everything the oracles need to know about the run besides the trace.
#[derive(Clone, Debug)]
pub struct TraceMeta {
    pub correct: Vec<NodeId>,
    pub gst: Tick,
    pub horizon: Tick,
    /// Chain protocols replace committed history; their ledgers fold.
    pub non_final: bool,
}

impl TraceMeta {
    pub fn of(scenario: &Scenario) -> TraceMeta {
        TraceMeta {
            correct: scenario.correct_set(),
            gst: scenario.net.gst,
            horizon: scenario.horizon,
            non_final: scenario.protocol.non_final(),
        }
    }

    fn long_enough(&self, slack: u64) -> bool {
        self.horizon >= self.gst + slack
    }
}

/// Per-node committed sequences. For final protocols this is the raw commit
/// stream; for non-final chains, commits at a height replace everything
/// above it.
pub fn commit_sequences(
    trace: &Trace,
    meta: &TraceMeta,
) -> BTreeMap<NodeId, Vec<(TraceEvent, CommitPayload)>> {
    let mut out: BTreeMap<NodeId, Vec<(TraceEvent, CommitPayload)>> = BTreeMap::new();
    for node in &meta.correct {
        out.insert(*node, Vec::new());
    }
    for ev in &trace.events {
        if let EventKind::Commit { index, payload } = &ev.kind {
            if let Some(seq) = out.get_mut(&ev.node) {
                if meta.non_final {
                    seq.truncate(*index as usize);
                }
                seq.push((ev.clone(), payload.clone()));
            }
        }
    }
    out
}

/// Flattened transaction view of the committed sequences.
pub fn final_tx_ledgers(trace: &Trace, meta: &TraceMeta) -> BTreeMap<NodeId, Vec<Payload>> {
    commit_sequences(trace, meta)
        .into_iter()
        .map(|(node, seq)| {
            let txs = seq
                .iter()
                .flat_map(|(_, p)| p.txs().into_iter().cloned().collect::<Vec<_>>())
                .collect();
            (node, txs)
        })
        .collect()
}

/// Agreement and total order: committed sequences of correct nodes must be
/// pairwise prefix-comparable, and everything committed anywhere must reach
/// every correct node by the horizon.
pub fn check_agreement_total_order(trace: &Trace, meta: &TraceMeta, slack: u64) -> Verdict {
    const P: &str = "agreement";
    let seqs = commit_sequences(trace, meta);
    let nodes: Vec<NodeId> = seqs.keys().copied().collect();
    for (i, a) in nodes.iter().enumerate() {
        for b in nodes.iter().skip(i + 1) {
            let sa = &seqs[a];
            let sb = &seqs[b];
            let common = sa.len().min(sb.len());
            for k in 0..common {
                if sa[k].1 != sb[k].1 {
                    return Verdict::fail(P, vec![sa[k].0.clone(), sb[k].0.clone()]);
                }
            }
        }
    }
    // Conflict-free; now require completeness at horizon.
    let max = nodes
        .iter()
        .max_by_key(|n| seqs[n].len())
        .copied();
    if let Some(richest) = max {
        for b in &nodes {
            if seqs[b].len() < seqs[&richest].len() {
                let missing = &seqs[&richest][seqs[b].len()];
                if meta.long_enough(slack) {
                    return Verdict::fail(P, vec![missing.0.clone()]);
                }
                return Verdict::inconclusive(
                    P,
                    format!("horizon {} < gst {} + slack {slack}", meta.horizon, meta.gst),
                );
            }
        }
    }
    Verdict::pass(P)
}

/// Integrity (no duplicate delivery; committed payloads of correct origin
/// were really submitted) and validity (a correct node's own submission
/// reaches its ledger by the horizon).
pub fn check_validity_integrity(trace: &Trace, meta: &TraceMeta, slack: u64) -> Verdict {
    const P: &str = "validity_integrity";
    let seqs = commit_sequences(trace, meta);
    // Integrity: per-node duplicate transactions.
    for seq in seqs.values() {
        let mut seen: BTreeMap<&Payload, &TraceEvent> = BTreeMap::new();
        for (ev, payload) in seq {
            for tx in payload.txs() {
                if let Some(first) = seen.get(tx) {
                    return Verdict::fail(P, vec![(*first).clone(), ev.clone()]);
                }
                seen.insert(tx, ev);
            }
        }
    }
    // Integrity: a committed payload with a correct origin must have been
    // submitted by that origin earlier in the trace.
    let mut submitted: BTreeMap<&Payload, &TraceEvent> = BTreeMap::new();
    for ev in &trace.events {
        if let EventKind::Submit { payload } = &ev.kind {
            submitted.entry(payload).or_insert(ev);
        }
    }
    for seq in seqs.values() {
        for (ev, payload) in seq {
            for tx in payload.txs() {
                if meta.correct.contains(&tx.origin) && !submitted.contains_key(tx) {
                    return Verdict::fail(P, vec![ev.clone()]);
                }
            }
        }
    }
    // Validity: own submissions committed locally by horizon.
    let ledgers = final_tx_ledgers(trace, meta);
    for ev in &trace.events {
        if let EventKind::Submit { payload } = &ev.kind {
            if !meta.correct.contains(&ev.node) {
                continue;
            }
            let mine = &ledgers[&ev.node];
            if !mine.contains(payload) {
                if meta.long_enough(slack) {
                    return Verdict::fail(P, vec![ev.clone()]);
                }
                return Verdict::inconclusive(
                    P,
                    format!("horizon {} < gst {} + slack {slack}", meta.horizon, meta.gst),
                );
            }
        }
    }
    Verdict::pass(P)
}

/// Liveness: every transaction submitted at a correct node up to
/// `horizon - slack` is committed at all correct nodes by the horizon.
pub fn check_liveness(trace: &Trace, meta: &TraceMeta, slack: u64) -> Verdict {
    const P: &str = "liveness";
    if !meta.long_enough(slack) {
        return Verdict::inconclusive(
            P,
            format!("horizon {} < gst {} + slack {slack}", meta.horizon, meta.gst),
        );
    }
    let deadline = meta.horizon.saturating_sub(slack);
    let ledgers = final_tx_ledgers(trace, meta);
    for ev in &trace.events {
        if let EventKind::Submit { payload } = &ev.kind {
            if !meta.correct.contains(&ev.node) || ev.time > deadline {
                continue;
            }
            for (node, ledger) in &ledgers {
                if !ledger.contains(payload) {
                    let mut witness = vec![ev.clone()];
                    witness.push(TraceEvent {
                        time: meta.horizon,
                        node: *node,
                        kind: EventKind::Flag {
                            note: format!("{payload} never committed here"),
                        },
                    });
                    return Verdict::fail(P, witness);
                }
            }
        }
    }
    Verdict::pass(P)
}

/// External validity: every committed transaction satisfies the named
/// predicate, evaluated against the committing node's own ledger prefix.
pub fn check_external_validity(trace: &Trace, meta: &TraceMeta, predicate: &str) -> Verdict {
    const P: &str = "external_validity";
    let pred: fn(&Payload, &[Payload]) -> bool = match predicate {
        "always_true" => |_, _| true,
        "unique_body" => |tx, prefix| prefix.iter().all(|p| p.body != tx.body),
        other => {
            return Verdict::inconclusive(P, format!("unknown predicate `{other}`"));
        }
    };
    let seqs = commit_sequences(trace, meta);
    for seq in seqs.values() {
        let mut prefix: Vec<Payload> = Vec::new();
        for (ev, payload) in seq {
            for tx in payload.txs() {
                if !pred(tx, &prefix) {
                    return Verdict::fail(P, vec![ev.clone()]);
                }
                prefix.push(tx.clone());
            }
        }
    }
    Verdict::pass(P)
}

/// Common prefix for longest-chain protocols: at every point in the trace,
/// the best chains of correct nodes truncated by `k` blocks must be
/// pairwise prefix-comparable.
pub fn check_common_prefix(trace: &Trace, meta: &TraceMeta, k: u64) -> Verdict {
    const P: &str = "common_prefix";
    let mut chains: BTreeMap<NodeId, Vec<(crate::types::BlockId, TraceEvent)>> = BTreeMap::new();
    for node in &meta.correct {
        chains.insert(*node, Vec::new());
    }
    for ev in &trace.events {
        let EventKind::Commit { index, payload } = &ev.kind else {
            continue;
        };
        let CommitPayload::Block { id, .. } = payload else {
            continue;
        };
        let Some(chain) = chains.get_mut(&ev.node) else {
            continue;
        };
        chain.truncate(*index as usize);
        chain.push((*id, ev.clone()));
        // Compare this node's truncated chain with every other.
        let me = &chains[&ev.node];
        let my_trunc = me.len().saturating_sub(k as usize);
        for (other, theirs) in &chains {
            if *other == ev.node {
                continue;
            }
            let their_trunc = theirs.len().saturating_sub(k as usize);
            let common = my_trunc.min(their_trunc);
            for i in 0..common {
                if me[i].0 != theirs[i].0 {
                    return Verdict::fail(P, vec![me[i].1.clone(), theirs[i].1.clone()]);
                }
            }
        }
    }
    Verdict::pass(P)
}

/// Eventual synchrony over the trace itself: every send between correct,
/// never-partitioned-in-between nodes is delivered by `max(sent, gst) +
/// delta`. Sends whose deadline lies past the horizon are exempt.
pub fn check_eventual_synchrony(trace: &Trace, scenario: &Scenario) -> Verdict {
    const P: &str = "eventual_synchrony";
    let correct = scenario.correct_set();
    let mut pending: BTreeMap<u64, (TraceEvent, Tick)> = BTreeMap::new();
    for ev in &trace.events {
        match &ev.kind {
            EventKind::Send { to, env, .. } => {
                if !correct.contains(&ev.node) || !correct.contains(to) {
                    continue;
                }
                let deadline = ev.time.max(scenario.net.gst) + scenario.net.delta;
                let exempt = deadline > scenario.horizon
                    || scenario
                        .partitions
                        .iter()
                        .any(|p| (ev.time.0..=deadline.0).any(|t| p.separates(ev.node, *to, Tick(t))));
                if !exempt {
                    pending.insert(*env, (ev.clone(), deadline));
                }
            }
            EventKind::Deliver { env, .. } => {
                if let Some((send, deadline)) = pending.remove(env) {
                    if ev.time > deadline {
                        return Verdict::fail(P, vec![send, ev.clone()]);
                    }
                }
            }
            _ => {}
        }
    }
    if let Some((_, (send, _))) = pending.iter().next() {
        return Verdict::fail(P, vec![send.clone()]);
    }
    Verdict::pass(P)
}

/// Runs the scenario's configured checker plan over a finished trace.
pub fn run_plan(trace: &Trace, scenario: &Scenario) -> Vec<Verdict> {
    let meta = TraceMeta::of(scenario);
    let plan = &scenario.checks;
    let slack = plan.liveness.unwrap_or(60);
    let mut out = Vec::new();
    if plan.agreement {
        out.push(check_agreement_total_order(trace, &meta, slack));
    }
    if plan.validity {
        out.push(check_validity_integrity(trace, &meta, slack));
    }
    if let Some(s) = plan.liveness {
        out.push(check_liveness(trace, &meta, s));
    }
    if let Some(pred) = &plan.external {
        out.push(check_external_validity(trace, &meta, pred));
    }
    if let Some(k) = plan.common_prefix {
        out.push(check_common_prefix(trace, &meta, k));
    }
    out
}
