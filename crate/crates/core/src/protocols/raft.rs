//! Minimal leader-based crash-tolerant atomic broadcast.
//!
//! Views ("terms") with a unique leader; the leader assigns log indexes and
//! commits an entry once a majority acknowledged it; followers elect a new
//! leader after a randomized timeout, restricted to candidates whose log is
//! at least as up to date. A new leader seals its term with an internal
//! no-op entry so earlier-term entries commit safely. The crash model is the
//! contract: adversarial peers are out of scope here.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{join, Action, CommitPayload, Ctx, LedgerSink, ProtocolMsg, ReplicaEvent, TimerKind};
use crate::types::{NodeId, Payload};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    /// Follower election timeout, drawn uniformly per arm.
    pub election_timeout: (u64, u64),
    /// Re-forward interval for pending client transactions.
    pub retry: u64,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            election_timeout: (10, 20),
            retry: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntryData {
    Tx(Payload),
    Noop,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entry {
    pub term: u64,
    pub data: EntryData,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Msg {
    Forward {
        tx: Payload,
    },
    /// Log suffix starting right after (prev_idx, prev_term); empty suffixes
    /// carry commit-index bumps and double as heartbeats.
    Append {
        term: u64,
        prev_idx: u64,
        prev_term: u64,
        entries: Vec<Entry>,
        commit: u64,
    },
    AppendAck {
        term: u64,
        ok: bool,
        /// Highest index known replicated on success; log-length hint on
        /// mismatch.
        match_idx: u64,
    },
    VoteReq {
        term: u64,
        last_idx: u64,
        last_term: u64,
    },
    Vote {
        term: u64,
    },
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Msg::Forward { tx } => write!(f, "forward({tx})"),
            Msg::Append {
                term,
                prev_idx,
                entries,
                commit,
                ..
            } => {
                let txt: Vec<String> = entries
                    .iter()
                    .map(|e| match &e.data {
                        EntryData::Tx(p) => format!("{p}@t{}", e.term),
                        EntryData::Noop => format!("noop@t{}", e.term),
                    })
                    .collect();
                write!(
                    f,
                    "append{{term={term} prev={prev_idx} entries=[{}] commit={commit}}}",
                    join(&txt)
                )
            }
            Msg::AppendAck {
                term,
                ok,
                match_idx,
            } => write!(f, "ack{{term={term} ok={ok} match={match_idx}}}"),
            Msg::VoteReq {
                term,
                last_idx,
                last_term,
            } => write!(f, "votereq{{term={term} last={last_idx}/{last_term}}}"),
            Msg::Vote { term } => write!(f, "vote{{term={term}}}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Role {
    Follower,
    Candidate,
    Leader,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Replica {
    me: NodeId,
    n: usize,
    cfg: Config,
    term: u64,
    role: Role,
    leader: Option<NodeId>,
    voted_for: Option<NodeId>,
    votes: BTreeSet<NodeId>,
    log: Vec<Entry>,
    commit_idx: u64,
    applied: u64,
    sink: LedgerSink,
    in_log: BTreeSet<Payload>,
    pending: BTreeSet<Payload>,
    next_idx: BTreeMap<NodeId, u64>,
    match_idx: BTreeMap<NodeId, u64>,
    election_armed: bool,
}

impl Replica {
    pub fn new(me: NodeId, n: usize, cfg: Config) -> Replica {
        Replica {
            me,
            n,
            cfg,
            term: 0,
            role: Role::Follower,
            leader: None,
            voted_for: None,
            votes: BTreeSet::new(),
            log: Vec::new(),
            commit_idx: 0,
            applied: 0,
            sink: LedgerSink::default(),
            in_log: BTreeSet::new(),
            pending: BTreeSet::new(),
            next_idx: BTreeMap::new(),
            match_idx: BTreeMap::new(),
            election_armed: false,
        }
    }

    pub fn ledger(&self) -> &[CommitPayload] {
        &self.sink.ledger
    }

    fn majority(&self) -> usize {
        self.n / 2 + 1
    }

    fn last(&self) -> (u64, u64) {
        let idx = self.log.len() as u64;
        let term = self.log.last().map(|e| e.term).unwrap_or(0);
        (idx, term)
    }

    fn work_pending(&self) -> bool {
        !self.pending.is_empty() || self.commit_idx < self.log.len() as u64
    }

    fn others(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n)
            .map(NodeId::from_index)
            .filter(move |id| *id != self.me)
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
                if let ProtocolMsg::Raft(m) = msg {
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
        if self.role == Role::Leader {
            self.propose(tx, out);
        } else if let Some(l) = self.leader {
            out.push(Action::Send {
                to: l,
                msg: ProtocolMsg::Raft(Msg::Forward { tx }),
            });
        }
        self.arm_retry(out);
        self.arm_election(false, ctx, out);
    }

    fn on_retry(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if self.pending.is_empty() {
            return;
        }
        if self.role == Role::Leader {
            for tx in self.pending.clone() {
                self.propose(tx, out);
            }
        } else if let Some(l) = self.leader {
            for tx in &self.pending {
                out.push(Action::Send {
                    to: l,
                    msg: ProtocolMsg::Raft(Msg::Forward { tx: tx.clone() }),
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

    /// Forced arming resets the deadline (evidence of leader progress);
    /// unforced arming only starts a timer when none is running, so retry
    /// chatter cannot starve elections.
    fn arm_election(&mut self, force: bool, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if self.role == Role::Leader || !self.work_pending() {
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
        if self.role == Role::Leader || !self.work_pending() {
            return;
        }
        self.term += 1;
        self.role = Role::Candidate;
        self.leader = None;
        self.voted_for = Some(self.me);
        self.votes = BTreeSet::from([self.me]);
        let (last_idx, last_term) = self.last();
        let msg = Msg::VoteReq {
            term: self.term,
            last_idx,
            last_term,
        };
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Raft(msg),
        });
        self.try_win(out);
        self.arm_election(true, ctx, out);
    }

    fn propose(&mut self, tx: Payload, out: &mut Vec<Action>) {
        if self.in_log.contains(&tx) || self.sink.seen.contains_key(&tx) {
            return;
        }
        self.in_log.insert(tx.clone());
        self.log.push(Entry {
            term: self.term,
            data: EntryData::Tx(tx),
        });
        self.replicate_all(out);
        self.try_advance_commit(out);
    }

    fn replicate_all(&mut self, out: &mut Vec<Action>) {
        for peer in self.others().collect::<Vec<_>>() {
            self.replicate_to(peer, out);
        }
    }

    fn replicate_to(&mut self, peer: NodeId, out: &mut Vec<Action>) {
        let next = *self.next_idx.get(&peer).unwrap_or(&1);
        let prev_idx = next - 1;
        let prev_term = if prev_idx == 0 {
            0
        } else {
            self.log[prev_idx as usize - 1].term
        };
        let entries = self.log[prev_idx as usize..].to_vec();
        out.push(Action::Send {
            to: peer,
            msg: ProtocolMsg::Raft(Msg::Append {
                term: self.term,
                prev_idx,
                prev_term,
                entries,
                commit: self.commit_idx,
            }),
        });
    }

    fn on_msg(&mut self, from: NodeId, msg: Msg, ctx: &mut Ctx, out: &mut Vec<Action>) {
        match msg {
            Msg::Forward { tx } => {
                if self.role == Role::Leader {
                    self.propose(tx, out);
                } else {
                    // Not the leader; hold it so a retry can route it later.
                    if !self.sink.seen.contains_key(&tx) {
                        self.pending.insert(tx);
                        self.arm_retry(out);
                        self.arm_election(false, ctx, out);
                    }
                }
            }
            Msg::Append {
                term,
                prev_idx,
                prev_term,
                entries,
                commit,
            } => self.on_append(from, term, prev_idx, prev_term, entries, commit, ctx, out),
            Msg::AppendAck {
                term,
                ok,
                match_idx,
            } => self.on_ack(from, term, ok, match_idx, out),
            Msg::VoteReq {
                term,
                last_idx,
                last_term,
            } => self.on_votereq(from, term, last_idx, last_term, ctx, out),
            Msg::Vote { term } => {
                if term == self.term && self.role == Role::Candidate {
                    self.votes.insert(from);
                    self.try_win(out);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn on_append(
        &mut self,
        from: NodeId,
        term: u64,
        prev_idx: u64,
        prev_term: u64,
        entries: Vec<Entry>,
        commit: u64,
        ctx: &mut Ctx,
        out: &mut Vec<Action>,
    ) {
        if term < self.term {
            out.push(Action::Send {
                to: from,
                msg: ProtocolMsg::Raft(Msg::AppendAck {
                    term: self.term,
                    ok: false,
                    match_idx: self.log.len() as u64,
                }),
            });
            return;
        }
        if term > self.term {
            self.term = term;
            self.voted_for = None;
        }
        self.role = Role::Follower;
        self.leader = Some(from);
        self.arm_election(true, ctx, out);

        let ok = prev_idx <= self.log.len() as u64
            && (prev_idx == 0 || self.log[prev_idx as usize - 1].term == prev_term);
        if !ok {
            out.push(Action::Send {
                to: from,
                msg: ProtocolMsg::Raft(Msg::AppendAck {
                    term: self.term,
                    ok: false,
                    match_idx: self.log.len().min(prev_idx as usize) as u64,
                }),
            });
            return;
        }
        // Overwrite any conflicting suffix, then append the rest.
        let mut idx = prev_idx as usize;
        for e in entries {
            if idx < self.log.len() {
                if self.log[idx] != e {
                    for dropped in &self.log[idx..] {
                        if let EntryData::Tx(p) = &dropped.data {
                            self.in_log.remove(p);
                        }
                    }
                    self.log.truncate(idx);
                    self.push_entry(e);
                }
            } else {
                self.push_entry(e);
            }
            idx += 1;
        }
        let match_idx = idx as u64;
        self.commit_idx = self.commit_idx.max(commit.min(self.log.len() as u64));
        self.apply(out);
        out.push(Action::Send {
            to: from,
            msg: ProtocolMsg::Raft(Msg::AppendAck {
                term: self.term,
                ok: true,
                match_idx,
            }),
        });
    }

    fn push_entry(&mut self, e: Entry) {
        if let EntryData::Tx(p) = &e.data {
            self.in_log.insert(p.clone());
        }
        self.log.push(e);
    }

    fn on_ack(&mut self, from: NodeId, term: u64, ok: bool, match_idx: u64, out: &mut Vec<Action>) {
        if self.role != Role::Leader || term != self.term {
            if term > self.term {
                self.term = term;
                self.role = Role::Follower;
                self.voted_for = None;
            }
            return;
        }
        if ok {
            self.match_idx.insert(from, match_idx);
            self.next_idx.insert(from, match_idx + 1);
            self.try_advance_commit(out);
        } else {
            let next = self.next_idx.entry(from).or_insert(1);
            *next = (*next - 1).max(1).min(match_idx + 1);
            self.replicate_to(from, out);
        }
    }

    fn try_advance_commit(&mut self, out: &mut Vec<Action>) {
        let old = self.commit_idx;
        for n in (self.commit_idx + 1..=self.log.len() as u64).rev() {
            // Only entries of the current term commit by counting.
            if self.log[n as usize - 1].term != self.term {
                continue;
            }
            let acks = 1 + self
                .match_idx
                .values()
                .filter(|&&m| m >= n)
                .count();
            if acks >= self.majority() {
                self.commit_idx = n;
                break;
            }
        }
        if self.commit_idx > old {
            self.apply(out);
            // Propagate the new commit index.
            self.replicate_all(out);
        }
    }

    fn apply(&mut self, out: &mut Vec<Action>) {
        while self.applied < self.commit_idx {
            let e = self.log[self.applied as usize].clone();
            self.applied += 1;
            if let EntryData::Tx(p) = e.data {
                self.pending.remove(&p);
                out.extend(self.sink.apply_tx(p));
            }
        }
    }

    fn on_votereq(
        &mut self,
        from: NodeId,
        term: u64,
        last_idx: u64,
        last_term: u64,
        ctx: &mut Ctx,
        out: &mut Vec<Action>,
    ) {
        if term > self.term {
            self.term = term;
            self.role = Role::Follower;
            self.voted_for = None;
        }
        let (my_idx, my_term) = self.last();
        let up_to_date = last_term > my_term || (last_term == my_term && last_idx >= my_idx);
        if term == self.term && self.voted_for.is_none() && up_to_date {
            self.voted_for = Some(from);
            out.push(Action::Send {
                to: from,
                msg: ProtocolMsg::Raft(Msg::Vote { term }),
            });
            self.arm_election(true, ctx, out);
        }
    }

    fn try_win(&mut self, out: &mut Vec<Action>) {
        if self.role != Role::Candidate || self.votes.len() < self.majority() {
            return;
        }
        self.role = Role::Leader;
        self.leader = Some(self.me);
        self.next_idx = self
            .others()
            .map(|p| (p, self.log.len() as u64 + 1))
            .collect();
        self.match_idx = self.others().map(|p| (p, 0)).collect();
        out.push(Action::EnterView { view: self.term });
        // Term seal: lets earlier-term entries commit under the counting rule.
        self.log.push(Entry {
            term: self.term,
            data: EntryData::Noop,
        });
        for tx in self.pending.clone() {
            if !self.in_log.contains(&tx) && !self.sink.seen.contains_key(&tx) {
                self.in_log.insert(tx.clone());
                self.log.push(Entry {
                    term: self.term,
                    data: EntryData::Tx(tx),
                });
            }
        }
        self.replicate_all(out);
        self.try_advance_commit(out);
    }
}
