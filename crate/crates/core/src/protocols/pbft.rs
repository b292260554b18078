//! Three-phase Byzantine total-order broadcast with round-robin leaders.
//!
//! Slot replication follows the echo/ready pattern with the ready
//! amplification disabled: a commit vote always attests that its sender
//! reached an echo quorum, which is exactly the evidence view changes need.
//! A view change collects signed state reports (prepared certificates) from
//! `2f+1` replicas; the incoming leader re-proposes every certified slot and
//! fills gaps with no-ops, so a payload committed by any correct node
//! survives into every later view. Checkpointing and log truncation are
//! omitted; runs are desk-scale.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{join, Action, CommitPayload, Ctx, LedgerSink, ProtocolMsg, ReplicaEvent, TimerKind};
use crate::broadcast::{BcastAction, BrbInstance, QuorumParams};
use crate::types::{NodeId, Payload};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    pub f: usize,
    /// Ticks without progress (while work is pending) before a view change.
    pub progress_timeout: u64,
    pub retry: u64,
    pub initial_view: u64,
}

impl Config {
    pub fn for_n(n: usize) -> Config {
        Config {
            f: (n.saturating_sub(1)) / 3,
            progress_timeout: 12,
            retry: 10,
            initial_view: 0,
        }
    }
}

/// What a slot holds: a client transaction, or the no-op a new leader uses
/// to fill an uncertified gap below a certified slot.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotValue {
    Tx(Payload),
    Noop,
}

impl fmt::Display for SlotValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotValue::Tx(p) => write!(f, "{p}"),
            SlotValue::Noop => write!(f, "noop"),
        }
    }
}

/// Evidence that `attesters` (an echo quorum) prepared `value` at
/// `(view, slot)`. Attestations are unforgeable in the model, so carrying
/// the set of node ids stands in for carrying their signed prepares.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PreparedCert {
    pub view: u64,
    pub slot: u64,
    pub value: SlotValue,
    pub attesters: BTreeSet<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Msg {
    Forward {
        tx: Payload,
    },
    PrePrepare {
        view: u64,
        slot: u64,
        tx: Payload,
    },
    Prepare {
        view: u64,
        slot: u64,
        value: SlotValue,
    },
    CommitVote {
        view: u64,
        slot: u64,
        value: SlotValue,
    },
    ViewChange {
        view: u64,
        prepared: Vec<PreparedCert>,
    },
    NewView {
        view: u64,
        changes: BTreeMap<NodeId, Vec<PreparedCert>>,
        proposals: Vec<(u64, SlotValue)>,
    },
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Msg::Forward { tx } => write!(f, "forward({tx})"),
            Msg::PrePrepare { view, slot, tx } => {
                write!(f, "preprepare{{v={view} s={slot} {tx}}}")
            }
            Msg::Prepare { view, slot, value } => {
                write!(f, "prepare{{v={view} s={slot} {value}}}")
            }
            Msg::CommitVote { view, slot, value } => {
                write!(f, "commit{{v={view} s={slot} {value}}}")
            }
            Msg::ViewChange { view, prepared } => {
                let certs: Vec<String> = prepared
                    .iter()
                    .map(|c| format!("(v={} s={} {} x{})", c.view, c.slot, c.value, c.attesters.len()))
                    .collect();
                write!(f, "viewchange{{v={view} certs=[{}]}}", join(&certs))
            }
            Msg::NewView {
                view, proposals, ..
            } => {
                let props: Vec<String> = proposals
                    .iter()
                    .map(|(s, v)| format!("{s}:{v}"))
                    .collect();
                write!(f, "newview{{v={view} proposals=[{}]}}", join(&props))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Replica {
    me: NodeId,
    n: usize,
    cfg: Config,
    params: QuorumParams,
    view: u64,
    /// False while view-changing; normal proposals are ignored then.
    active: bool,
    vc_target: u64,
    insts: BTreeMap<(u64, u64), BrbInstance<SlotValue>>,
    committed: BTreeMap<u64, SlotValue>,
    applied: u64,
    sink: LedgerSink,
    pending: BTreeSet<Payload>,
    proposed: BTreeMap<u64, SlotValue>,
    next_slot: u64,
    vcs: BTreeMap<u64, BTreeMap<NodeId, Vec<PreparedCert>>>,
    new_view_done: BTreeSet<u64>,
    progress_armed: bool,
}

impl Replica {
    pub fn new(me: NodeId, n: usize, cfg: Config) -> Replica {
        let params = QuorumParams { n, f: cfg.f };
        let view = cfg.initial_view;
        Replica {
            me,
            n,
            cfg,
            params,
            view,
            active: true,
            vc_target: view,
            insts: BTreeMap::new(),
            committed: BTreeMap::new(),
            applied: 0,
            sink: LedgerSink::default(),
            pending: BTreeSet::new(),
            proposed: BTreeMap::new(),
            next_slot: 0,
            vcs: BTreeMap::new(),
            new_view_done: BTreeSet::new(),
            progress_armed: false,
        }
    }

    pub fn ledger(&self) -> &[CommitPayload] {
        &self.sink.ledger
    }

    pub fn leader_of(&self, view: u64) -> NodeId {
        NodeId((view % self.n as u64) as u8)
    }

    fn is_leader(&self) -> bool {
        self.active && self.leader_of(self.view) == self.me
    }

    fn work_pending(&self) -> bool {
        if !self.pending.is_empty() {
            return true;
        }
        match self.committed.keys().next_back() {
            Some(&max) => max >= self.applied,
            None => false,
        }
    }

    pub fn handle(&mut self, ev: &ReplicaEvent, ctx: &mut Ctx) -> Vec<Action> {
        let mut out = Vec::new();
        match ev {
            ReplicaEvent::Init => {}
            ReplicaEvent::Submit(tx) => self.on_client_tx(tx.clone(), &mut out),
            ReplicaEvent::Timer(TimerKind::Progress) => self.on_progress_timer(&mut out),
            ReplicaEvent::Timer(TimerKind::Retry) => self.on_retry(&mut out),
            ReplicaEvent::Timer(_) => {}
            ReplicaEvent::Message { from, msg } => {
                if let ProtocolMsg::Pbft(m) = msg {
                    self.on_msg(*from, m.clone(), &mut out);
                }
            }
        }
        let _ = ctx;
        out
    }

    fn on_client_tx(&mut self, tx: Payload, out: &mut Vec<Action>) {
        if self.sink.seen.contains_key(&tx) {
            return;
        }
        self.pending.insert(tx.clone());
        if self.is_leader() {
            self.propose(tx, out);
        } else if self.active {
            let l = self.leader_of(self.view);
            out.push(Action::Send {
                to: l,
                msg: ProtocolMsg::Pbft(Msg::Forward { tx }),
            });
        }
        self.arm_retry(out);
        self.arm_progress(false, out);
    }

    fn on_retry(&mut self, out: &mut Vec<Action>) {
        if self.pending.is_empty() {
            return;
        }
        if self.is_leader() {
            for tx in self.pending.clone() {
                self.propose(tx, out);
            }
        } else {
            // Retries go to everyone, like a client re-broadcasting its
            // request: every replica learns of the pending work, which is
            // what lets view changes gather a quorum.
            for tx in &self.pending {
                out.push(Action::Broadcast {
                    msg: ProtocolMsg::Pbft(Msg::Forward { tx: tx.clone() }),
                });
            }
        }
        self.arm_retry(out);
    }

    fn arm_retry(&self, out: &mut Vec<Action>) {
        if !self.pending.is_empty() {
            out.push(Action::SetTimer {
                kind: TimerKind::Retry,
                after: self.cfg.retry,
            });
        }
    }

    /// Forced arming resets the deadline (a slot was applied or a view
    /// change advanced); unforced arming starts a timer only when none is
    /// running, so forwarded-request chatter cannot suppress view changes.
    fn arm_progress(&mut self, force: bool, out: &mut Vec<Action>) {
        if !self.work_pending() {
            return;
        }
        if !force && self.progress_armed {
            return;
        }
        self.progress_armed = true;
        out.push(Action::SetTimer {
            kind: TimerKind::Progress,
            after: self.cfg.progress_timeout,
        });
    }

    fn on_progress_timer(&mut self, out: &mut Vec<Action>) {
        self.progress_armed = false;
        if !self.work_pending() {
            return;
        }
        let target = self.vc_target.max(self.view) + 1;
        self.start_vc(target, out);
    }

    fn start_vc(&mut self, target: u64, out: &mut Vec<Action>) {
        self.vc_target = target;
        self.active = false;
        let certs = self.my_certs();
        self.vcs
            .entry(target)
            .or_default()
            .insert(self.me, certs.clone());
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Pbft(Msg::ViewChange {
                view: target,
                prepared: certs,
            }),
        });
        self.try_new_view(target, out);
        self.arm_progress(true, out);
    }

    /// Best prepared certificate per slot across all views.
    fn my_certs(&self) -> Vec<PreparedCert> {
        let mut best: BTreeMap<u64, PreparedCert> = BTreeMap::new();
        for ((view, slot), inst) in &self.insts {
            if let Some((value, attesters)) = inst.prepared() {
                let cert = PreparedCert {
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
        }
        best.into_values().collect()
    }

    fn propose(&mut self, tx: Payload, out: &mut Vec<Action>) {
        let val = SlotValue::Tx(tx.clone());
        if self.sink.seen.contains_key(&tx)
            || self.committed.values().any(|v| *v == val)
            || self.proposed.values().any(|v| *v == val)
        {
            return;
        }
        while self.committed.contains_key(&self.next_slot)
            || self.proposed.contains_key(&self.next_slot)
        {
            self.next_slot += 1;
        }
        let slot = self.next_slot;
        self.next_slot += 1;
        self.proposed.insert(slot, val.clone());
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Pbft(Msg::PrePrepare {
                view: self.view,
                slot,
                tx,
            }),
        });
        let view = self.view;
        let me = self.me;
        let acts = self.inst(view, slot).on_send(me, val);
        self.consume(view, slot, acts, out, true);
    }

    fn inst(&mut self, view: u64, slot: u64) -> &mut BrbInstance<SlotValue> {
        let me = self.me;
        let params = self.params;
        let sender = self.leader_of(view);
        self.insts
            .entry((view, slot))
            .or_insert_with(|| BrbInstance::new_unamplified(me, sender, params))
    }

    fn consume(
        &mut self,
        view: u64,
        slot: u64,
        acts: Vec<BcastAction<SlotValue>>,
        out: &mut Vec<Action>,
        suppress_echo: bool,
    ) {
        for act in acts {
            match act {
                BcastAction::Echo(value) => {
                    if !suppress_echo {
                        out.push(Action::Broadcast {
                            msg: ProtocolMsg::Pbft(Msg::Prepare { view, slot, value }),
                        });
                    }
                }
                BcastAction::Ready(value) => {
                    out.push(Action::Broadcast {
                        msg: ProtocolMsg::Pbft(Msg::CommitVote { view, slot, value }),
                    });
                }
                BcastAction::Deliver(value) => self.commit(slot, value, out),
            }
        }
    }

    fn commit(&mut self, slot: u64, value: SlotValue, out: &mut Vec<Action>) {
        self.committed.entry(slot).or_insert(value);
        let mut progressed = false;
        while let Some(v) = self.committed.get(&self.applied).cloned() {
            self.applied += 1;
            progressed = true;
            if let SlotValue::Tx(p) = v {
                self.pending.remove(&p);
                out.extend(self.sink.apply_tx(p));
            }
        }
        if progressed {
            self.arm_progress(true, out);
        }
    }

    fn on_msg(&mut self, from: NodeId, msg: Msg, out: &mut Vec<Action>) {
        match msg {
            Msg::Forward { tx } => {
                if self.is_leader() {
                    if !self.sink.seen.contains_key(&tx) {
                        self.pending.insert(tx.clone());
                        self.propose(tx, out);
                        self.arm_progress(false, out);
                    }
                } else if !self.sink.seen.contains_key(&tx) {
                    self.pending.insert(tx);
                    self.arm_retry(out);
                    self.arm_progress(false, out);
                }
            }
            Msg::PrePrepare { view, slot, tx } => {
                // Normal-case proposals are only valid from the leader of
                // the view we are actively in; re-proposals travel inside
                // NewView and are validated there.
                if !self.active || view != self.view || from != self.leader_of(view) {
                    return;
                }
                let acts = self.inst(view, slot).on_send(from, SlotValue::Tx(tx));
                self.consume(view, slot, acts, out, false);
            }
            Msg::Prepare { view, slot, value } => {
                // Attestation counting is safe across views.
                let acts = self.inst(view, slot).on_echo(from, value);
                self.consume(view, slot, acts, out, false);
            }
            Msg::CommitVote { view, slot, value } => {
                let acts = self.inst(view, slot).on_ready(from, value);
                self.consume(view, slot, acts, out, false);
            }
            Msg::ViewChange { view, prepared } => self.on_view_change(from, view, prepared, out),
            Msg::NewView {
                view,
                changes,
                proposals,
            } => self.on_new_view(from, view, changes, proposals, out),
        }
    }

    fn on_view_change(
        &mut self,
        from: NodeId,
        view: u64,
        prepared: Vec<PreparedCert>,
        out: &mut Vec<Action>,
    ) {
        if view < self.vc_target || !self.certs_well_formed(&prepared) {
            return;
        }
        self.vcs.entry(view).or_default().insert(from, prepared);
        // Join an ongoing view change once f+1 distinct peers are past us.
        let mut ahead: BTreeSet<NodeId> = BTreeSet::new();
        let mut smallest: Option<u64> = None;
        for (&w, senders) in &self.vcs {
            if w > self.vc_target {
                for s in senders.keys() {
                    ahead.insert(*s);
                }
                smallest = Some(smallest.map_or(w, |cur: u64| cur.min(w)));
            }
        }
        if ahead.len() >= self.params.f + 1 {
            if let Some(w) = smallest {
                self.start_vc(w, out);
                return;
            }
        }
        self.try_new_view(view, out);
    }

    fn certs_well_formed(&self, certs: &[PreparedCert]) -> bool {
        certs
            .iter()
            .all(|c| c.attesters.len() >= self.params.echo_quorum())
    }

    fn try_new_view(&mut self, view: u64, out: &mut Vec<Action>) {
        if self.leader_of(view) != self.me
            || view != self.vc_target
            || self.new_view_done.contains(&view)
        {
            return;
        }
        let quorum = 2 * self.params.f + 1;
        let have = match self.vcs.get(&view) {
            Some(m) => m.len(),
            None => 0,
        };
        if have < quorum {
            return;
        }
        let changes: BTreeMap<NodeId, Vec<PreparedCert>> = self.vcs[&view]
            .iter()
            .take(quorum)
            .map(|(k, v)| (*k, v.clone()))
            .collect();
        let proposals = compute_proposals(&changes);
        self.new_view_done.insert(view);
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Pbft(Msg::NewView {
                view,
                changes,
                proposals: proposals.clone(),
            }),
        });
        self.enter_view(view, out);
        for (slot, val) in proposals {
            self.proposed.insert(slot, val.clone());
            let me = self.me;
            let acts = self.inst(view, slot).on_send(me, val);
            self.consume(view, slot, acts, out, true);
        }
        for tx in self.pending.clone() {
            self.propose(tx, out);
        }
    }

    fn on_new_view(
        &mut self,
        from: NodeId,
        view: u64,
        changes: BTreeMap<NodeId, Vec<PreparedCert>>,
        proposals: Vec<(u64, SlotValue)>,
        out: &mut Vec<Action>,
    ) {
        if from != self.leader_of(view)
            || view < self.view
            || self.new_view_done.contains(&view)
        {
            return;
        }
        if changes.len() < 2 * self.params.f + 1 {
            return;
        }
        if !changes.values().all(|c| self.certs_well_formed(c)) {
            return;
        }
        // The re-proposal list must be exactly what the certificates imply.
        if compute_proposals(&changes) != proposals {
            return;
        }
        self.new_view_done.insert(view);
        self.enter_view(view, out);
        for (slot, val) in proposals {
            let acts = self.inst(view, slot).on_send(from, val);
            self.consume(view, slot, acts, out, false);
        }
        let l = self.leader_of(view);
        for tx in &self.pending {
            out.push(Action::Send {
                to: l,
                msg: ProtocolMsg::Pbft(Msg::Forward { tx: tx.clone() }),
            });
        }
    }

    /// Monotone dead-message predicate for the schedule explorer. Views and
    /// view-change targets only grow; attestation sets only grow.
    pub(crate) fn dead_message(&self, from: NodeId, msg: &Msg) -> bool {
        match msg {
            Msg::PrePrepare { view, .. } => {
                *view < self.view || from != self.leader_of(*view)
            }
            Msg::Prepare { view, slot, value } => self
                .insts
                .get(&(*view, *slot))
                .map(|i| i.has_echo(from, value))
                .unwrap_or(false),
            Msg::CommitVote { view, slot, value } => self
                .insts
                .get(&(*view, *slot))
                .map(|i| i.has_ready(from, value))
                .unwrap_or(false),
            Msg::ViewChange { view, .. } => {
                *view < self.vc_target
                    || self
                        .vcs
                        .get(view)
                        .map(|m| m.contains_key(&from))
                        .unwrap_or(false)
            }
            Msg::NewView { view, .. } => {
                *view < self.view || self.new_view_done.contains(view)
            }
            Msg::Forward { tx } => self.sink.seen.contains_key(tx),
        }
    }

    fn enter_view(&mut self, view: u64, out: &mut Vec<Action>) {
        self.view = view;
        self.vc_target = view;
        self.active = true;
        self.proposed.clear();
        self.next_slot = 0;
        out.push(Action::EnterView { view });
        self.arm_progress(true, out);
    }
}

/// The deterministic re-proposal rule both the new leader and its verifiers
/// compute: per slot the certificate from the highest view wins; uncertified
/// slots below the highest certified one become no-ops.
pub fn compute_proposals(
    changes: &BTreeMap<NodeId, Vec<PreparedCert>>,
) -> Vec<(u64, SlotValue)> {
    let mut best: BTreeMap<u64, &PreparedCert> = BTreeMap::new();
    for certs in changes.values() {
        for c in certs {
            match best.get(&c.slot) {
                Some(prev) if (prev.view, &prev.value) >= (c.view, &c.value) => {}
                _ => {
                    best.insert(c.slot, c);
                }
            }
        }
    }
    let max_slot = match best.keys().next_back() {
        Some(&s) => s,
        None => return Vec::new(),
    };
    (0..=max_slot)
        .map(|slot| {
            let val = best
                .get(&slot)
                .map(|c| c.value.clone())
                .unwrap_or(SlotValue::Noop);
            (slot, val)
        })
        .collect()
}
