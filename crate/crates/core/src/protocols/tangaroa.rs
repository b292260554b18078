//! Distilled model of the flawed BFT extension of leader-based log
//! replication.
//!
//! Two properties of the original design are reproduced faithfully because
//! they are what the adversary exploits:
//!
//! 1. A slot commits as soon as the single-echo-round broadcast delivers it
//!    locally. Consistent broadcast guarantees no two correct nodes deliver
//!    *different* payloads per instance, but nothing forces a later leader
//!    to learn about a payload some node already committed.
//! 2. Any node may nominate itself after a private random timeout and is
//!    elected by a bare majority of votes; nobody can audit whether the
//!    nominator actually waited, and the vote carries no log information.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{join, Action, CommitPayload, Ctx, LedgerSink, ProtocolMsg, ReplicaEvent, TimerKind};
use crate::broadcast::{BcastAction, BcastMsg, BcbInstance, QuorumParams};
use crate::types::{NodeId, Payload};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    pub f: usize,
    pub election_timeout: (u64, u64),
    pub retry: u64,
    /// Leader of the starting view, if statically configured.
    pub initial_leader: Option<NodeId>,
}

impl Config {
    pub fn for_n(n: usize) -> Config {
        Config {
            f: (n.saturating_sub(1)) / 3,
            election_timeout: (10, 20),
            retry: 12,
            initial_leader: Some(NodeId(0)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Msg {
    Forward { tx: Payload },
    /// Leader's replication message for one slot (broadcast send).
    Append { view: u64, slot: u64, tx: Payload },
    /// All-to-all echo of an append.
    Echo { view: u64, slot: u64, tx: Payload },
    /// Self-nomination for a view.
    Nominate { view: u64 },
    /// Vote for the nominator, sent to the nominator.
    Vote { view: u64 },
    /// Nominator announces leadership with the votes it gathered.
    NewLeader { view: u64, votes: BTreeSet<NodeId> },
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Msg::Forward { tx } => write!(f, "forward({tx})"),
            Msg::Append { view, slot, tx } => write!(f, "append{{v={view} s={slot} {tx}}}"),
            Msg::Echo { view, slot, tx } => write!(f, "echo{{v={view} s={slot} {tx}}}"),
            Msg::Nominate { view } => write!(f, "nominate{{v={view}}}"),
            Msg::Vote { view } => write!(f, "vote{{v={view}}}"),
            Msg::NewLeader { view, votes } => {
                let v: Vec<String> = votes.iter().map(|n| n.to_string()).collect();
                write!(f, "newleader{{v={view} votes=[{}]}}", join(&v))
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
    leader: Option<NodeId>,
    /// Vote cast per view (any nomination is accepted, first come first
    /// served — the unauditable-timeout flaw).
    voted: BTreeMap<u64, NodeId>,
    /// Votes gathered for own nominations.
    votes_for_me: BTreeMap<u64, BTreeSet<NodeId>>,
    insts: BTreeMap<(u64, u64), BcbInstance>,
    committed: BTreeMap<u64, Payload>,
    applied: u64,
    sink: LedgerSink,
    pending: BTreeSet<Payload>,
    /// Slots proposed in the current view while leading.
    proposed: BTreeMap<u64, Payload>,
    next_slot: u64,
    election_armed: bool,
}

impl Replica {
    pub fn new(me: NodeId, n: usize, cfg: Config) -> Replica {
        let params = QuorumParams { n, f: cfg.f };
        let leader = cfg.initial_leader;
        Replica {
            me,
            n,
            cfg,
            params,
            view: 1,
            leader,
            voted: BTreeMap::new(),
            votes_for_me: BTreeMap::new(),
            insts: BTreeMap::new(),
            committed: BTreeMap::new(),
            applied: 0,
            sink: LedgerSink::default(),
            pending: BTreeSet::new(),
            proposed: BTreeMap::new(),
            next_slot: 0,
            election_armed: false,
        }
    }

    pub fn ledger(&self) -> &[CommitPayload] {
        &self.sink.ledger
    }

    fn majority(&self) -> usize {
        self.n / 2 + 1
    }

    fn is_leader(&self) -> bool {
        self.leader == Some(self.me)
    }

    fn work_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn handle(&mut self, ev: &ReplicaEvent, ctx: &mut Ctx) -> Vec<Action> {
        let mut out = Vec::new();
        match ev {
            ReplicaEvent::Init => {}
            ReplicaEvent::Submit(tx) => self.on_client_tx(tx.clone(), ctx, &mut out),
            ReplicaEvent::Timer(TimerKind::Election) => self.on_election_timer(ctx, &mut out),
            ReplicaEvent::Timer(TimerKind::Retry) => self.on_retry(ctx, &mut out),
            ReplicaEvent::Timer(_) => {}
            ReplicaEvent::Message { from, msg } => {
                if let ProtocolMsg::Tangaroa(m) = msg {
                    self.on_msg(*from, m.clone(), ctx, &mut out);
                }
            }
        }
        out
    }

    fn on_client_tx(&mut self, tx: Payload, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if self.sink.seen.contains_key(&tx) {
            return;
        }
        self.pending.insert(tx.clone());
        if self.is_leader() {
            self.propose(tx, out);
        } else if let Some(l) = self.leader {
            out.push(Action::Send {
                to: l,
                msg: ProtocolMsg::Tangaroa(Msg::Forward { tx }),
            });
        }
        self.arm_retry(out);
        self.arm_election(false, ctx, out);
    }

    fn on_retry(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if self.pending.is_empty() {
            return;
        }
        if self.is_leader() {
            for tx in self.pending.clone() {
                self.propose(tx, out);
            }
        } else if let Some(l) = self.leader {
            for tx in &self.pending {
                out.push(Action::Send {
                    to: l,
                    msg: ProtocolMsg::Tangaroa(Msg::Forward { tx: tx.clone() }),
                });
            }
        }
        self.arm_retry(out);
        self.arm_election(false, ctx, out);
    }

    fn arm_retry(&self, out: &mut Vec<Action>) {
        if !self.pending.is_empty() {
            out.push(Action::SetTimer {
                kind: TimerKind::Retry,
                after: self.cfg.retry,
            });
        }
    }

    /// Forced arming resets the deadline (leader progress or a vote just
    /// cast); unforced arming only starts a timer when none is pending.
    fn arm_election(&mut self, force: bool, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if self.is_leader() || !self.work_pending() {
            return;
        }
        if !force && self.election_armed {
            return;
        }
        self.election_armed = true;
        let (lo, hi) = self.cfg.election_timeout;
        out.push(Action::SetTimer {
            kind: TimerKind::Election,
            after: ctx.rand.range(lo, hi),
        });
    }

    fn on_election_timer(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        self.election_armed = false;
        if self.is_leader() || !self.work_pending() {
            return;
        }
        let target = self.view + 1;
        self.view = target;
        self.leader = None;
        self.voted.insert(target, self.me);
        self.votes_for_me
            .entry(target)
            .or_default()
            .insert(self.me);
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Tangaroa(Msg::Nominate { view: target }),
        });
        self.try_take_over(target, out);
        self.arm_election(true, ctx, out);
    }

    fn propose(&mut self, tx: Payload, out: &mut Vec<Action>) {
        if self.sink.seen.contains_key(&tx)
            || self.committed.values().any(|p| *p == tx)
            || self.proposed.values().any(|p| *p == tx)
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
        self.proposed.insert(slot, tx.clone());
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Tangaroa(Msg::Append {
                view: self.view,
                slot,
                tx: tx.clone(),
            }),
        });
        // Run our own instance: the send counts for us as leader.
        let view = self.view;
        let me = self.me;
        let acts = self
            .inst(view, slot, me)
            .handle(me, &BcastMsg::Send(tx));
        self.consume(view, slot, acts, out, true);
    }

    fn inst(&mut self, view: u64, slot: u64, sender: NodeId) -> &mut BcbInstance {
        let me = self.me;
        let params = self.params;
        self.insts
            .entry((view, slot))
            .or_insert_with(|| BcbInstance::new(me, sender, params))
    }

    /// Applies instance actions. `suppress_echo` is set for the leader: its
    /// append already stands for its echo.
    fn consume(
        &mut self,
        view: u64,
        slot: u64,
        acts: Vec<BcastAction>,
        out: &mut Vec<Action>,
        suppress_echo: bool,
    ) {
        for act in acts {
            match act {
                BcastAction::Echo(p) => {
                    if !suppress_echo {
                        out.push(Action::Broadcast {
                            msg: ProtocolMsg::Tangaroa(Msg::Echo { view, slot, tx: p }),
                        });
                    }
                }
                BcastAction::Ready(_) => {}
                BcastAction::Deliver(p) => self.commit(slot, p, out),
            }
        }
    }

    /// The flawed commit rule: local delivery of the echo broadcast commits
    /// the slot immediately.
    fn commit(&mut self, slot: u64, tx: Payload, out: &mut Vec<Action>) {
        if self.committed.contains_key(&slot) {
            return;
        }
        self.committed.insert(slot, tx);
        while let Some(p) = self.committed.get(&self.applied).cloned() {
            self.applied += 1;
            self.pending.remove(&p);
            out.extend(self.sink.apply_tx(p));
        }
    }

    fn on_msg(&mut self, from: NodeId, msg: Msg, ctx: &mut Ctx, out: &mut Vec<Action>) {
        match msg {
            Msg::Forward { tx } => {
                if self.is_leader() {
                    self.propose(tx, out);
                } else if !self.sink.seen.contains_key(&tx) {
                    self.pending.insert(tx);
                    self.arm_retry(out);
                    self.arm_election(false, ctx, out);
                }
            }
            Msg::Append { view, slot, tx } => {
                if view != self.view || Some(from) != self.leader {
                    return;
                }
                self.arm_election(true, ctx, out); // leader is alive
                let acts = self.inst(view, slot, from).handle(from, &BcastMsg::Send(tx));
                self.consume(view, slot, acts, out, false);
            }
            Msg::Echo { view, slot, tx } => {
                if view != self.view {
                    return;
                }
                let sender = self.leader.unwrap_or(from);
                let acts = self.inst(view, slot, sender).handle(from, &BcastMsg::Echo(tx));
                self.consume(view, slot, acts, out, false);
            }
            Msg::Nominate { view } => {
                // No way to audit the nominator's timeout: vote for the
                // first nomination seen per view, and move to that view
                // leaderless (stale-view replication is rejected from here
                // on).
                if view > self.view && !self.voted.contains_key(&view) {
                    self.view = view;
                    self.leader = None;
                    self.voted.insert(view, from);
                    out.push(Action::Send {
                        to: from,
                        msg: ProtocolMsg::Tangaroa(Msg::Vote { view }),
                    });
                    self.arm_election(true, ctx, out);
                }
            }
            Msg::Vote { view } => {
                if view >= self.view {
                    self.votes_for_me.entry(view).or_default().insert(from);
                    self.try_take_over(view, out);
                }
            }
            Msg::NewLeader { view, votes } => {
                if (view > self.view || (view == self.view && self.leader.is_none()))
                    && votes.len() >= self.majority()
                {
                    self.enter_view(view, from, ctx, out);
                }
            }
        }
    }

    fn try_take_over(&mut self, view: u64, out: &mut Vec<Action>) {
        let enough = self
            .votes_for_me
            .get(&view)
            .map(|v| v.len() >= self.majority())
            .unwrap_or(false);
        let nominated_me = self.voted.get(&view) == Some(&self.me);
        if view != self.view || self.leader.is_some() || !nominated_me || !enough {
            return;
        }
        let votes = self.votes_for_me[&view].clone();
        self.view = view;
        self.leader = Some(self.me);
        self.proposed.clear();
        // The flaw: the new leader resumes from its own committed state
        // only; prior views' in-flight slots are invisible to it.
        self.next_slot = self.committed.keys().max().map(|s| s + 1).unwrap_or(0);
        out.push(Action::EnterView { view });
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Tangaroa(Msg::NewLeader { view, votes }),
        });
        for tx in self.pending.clone() {
            self.propose(tx, out);
        }
    }

    /// Monotone dead-message predicate for the schedule explorer: the view
    /// only grows and a view's leader never unsets, so stale-view traffic
    /// and already-counted duplicates can never matter again.
    pub(crate) fn dead_message(&self, from: NodeId, msg: &Msg) -> bool {
        match msg {
            Msg::Append { view, .. } => {
                *view < self.view
                    || (*view == self.view
                        && self.leader.is_some()
                        && self.leader != Some(from))
            }
            Msg::Echo { view, .. } => *view < self.view,
            Msg::Nominate { view } => {
                *view < self.view || (*view == self.view && self.voted.contains_key(view))
            }
            Msg::Vote { view } => {
                // A vote helps only if this node nominated (or can still
                // nominate) that view: self-nominations always target
                // view+1, so a vote for the current view is junk unless we
                // nominated it ourselves and are still unelected.
                if *view < self.view || self.votes_for_me.get(view).map(|v| v.contains(&from)).unwrap_or(false) {
                    return true;
                }
                if *view == self.view {
                    self.voted.get(view) != Some(&self.me) || self.leader.is_some()
                } else {
                    false
                }
            }
            Msg::NewLeader { view, .. } => {
                *view < self.view || (*view == self.view && self.leader.is_some())
            }
            Msg::Forward { tx } => self.sink.seen.contains_key(tx),
        }
    }

    fn enter_view(&mut self, view: u64, leader: NodeId, ctx: &mut Ctx, out: &mut Vec<Action>) {
        self.view = view;
        self.leader = Some(leader);
        self.proposed.clear();
        out.push(Action::EnterView { view });
        for tx in &self.pending {
            out.push(Action::Send {
                to: leader,
                msg: ProtocolMsg::Tangaroa(Msg::Forward { tx: tx.clone() }),
            });
        }
        self.arm_election(true, ctx, out);
    }
}
