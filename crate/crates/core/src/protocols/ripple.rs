//! Round-threshold ledger voting over declared trust lists.
//!
//! Each validator listens only to the validators on its own list. Per ledger
//! sequence it iterates timed rounds; at each round close it adopts the
//! plurality value among the proposals received from its list when that
//! value's share clears the round threshold (50, 60, 70, then 80 percent),
//! and on clearing the final threshold it closes the entry. Lists that
//! overlap too little can close conflicting entries: the fork the static
//! analysis in `quorum` predicts and the explorer can witness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Action, CommitPayload, Ctx, LedgerSink, ProtocolMsg, ReplicaEvent, TimerKind};
use crate::types::{NodeId, Payload};

pub const ROUND_THRESHOLDS_PCT: [u32; 4] = [50, 60, 70, 80];

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    /// Per-node trust lists; nodes absent from the map trust everyone.
    pub unl: BTreeMap<NodeId, Vec<NodeId>>,
    /// Ticks per voting round.
    pub round_len: u64,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            unl: BTreeMap::new(),
            round_len: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Msg {
    Proposal { seq: u64, round: u8, value: Payload },
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Msg::Proposal { seq, round, value } => {
                write!(f, "proposal{{seq={seq} r={round} {value}}}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Replica {
    me: NodeId,
    n: usize,
    cfg: Config,
    unl: BTreeSet<NodeId>,
    seq: u64,
    round: u8,
    candidate: Option<Payload>,
    running: bool,
    received: BTreeMap<(u64, u8), BTreeMap<NodeId, Payload>>,
    pending: BTreeSet<Payload>,
    sink: LedgerSink,
}

impl Replica {
    pub fn new(me: NodeId, n: usize, cfg: Config) -> Replica {
        let unl: BTreeSet<NodeId> = match cfg.unl.get(&me) {
            Some(list) => list.iter().copied().collect(),
            None => (0..n).map(NodeId::from_index).collect(),
        };
        Replica {
            me,
            n,
            cfg,
            unl,
            seq: 0,
            round: 1,
            candidate: None,
            running: false,
            received: BTreeMap::new(),
            pending: BTreeSet::new(),
            sink: LedgerSink::default(),
        }
    }

    pub fn ledger(&self) -> &[CommitPayload] {
        &self.sink.ledger
    }

    pub fn handle(&mut self, ev: &ReplicaEvent, _ctx: &mut Ctx) -> Vec<Action> {
        let mut out = Vec::new();
        match ev {
            ReplicaEvent::Init => {}
            ReplicaEvent::Submit(tx) => {
                if !self.sink.seen.contains_key(tx) {
                    self.pending.insert(tx.clone());
                    if self.candidate.is_none() {
                        self.candidate = self.pick_candidate();
                    }
                    self.open_round(&mut out);
                }
            }
            ReplicaEvent::Timer(TimerKind::Round) => self.close_round(&mut out),
            ReplicaEvent::Timer(_) => {}
            ReplicaEvent::Message { from, msg } => {
                if let ProtocolMsg::Ripple(m) = msg {
                    self.on_msg(*from, m.clone(), &mut out);
                }
            }
        }
        out
    }

    fn pick_candidate(&self) -> Option<Payload> {
        self.pending
            .iter()
            .find(|p| !self.sink.seen.contains_key(*p))
            .cloned()
    }

    fn open_round(&mut self, out: &mut Vec<Action>) {
        if self.running {
            return;
        }
        self.running = true;
        self.broadcast_proposal(out);
        out.push(Action::SetTimer {
            kind: TimerKind::Round,
            after: self.cfg.round_len,
        });
    }

    fn broadcast_proposal(&mut self, out: &mut Vec<Action>) {
        if let Some(c) = self.candidate.clone() {
            out.push(Action::Broadcast {
                msg: ProtocolMsg::Ripple(Msg::Proposal {
                    seq: self.seq,
                    round: self.round,
                    value: c.clone(),
                }),
            });
            if self.unl.contains(&self.me) {
                self.received
                    .entry((self.seq, self.round))
                    .or_default()
                    .insert(self.me, c);
            }
        }
    }

    fn on_msg(&mut self, from: NodeId, msg: Msg, out: &mut Vec<Action>) {
        let Msg::Proposal { seq, round, value } = msg;
        if !self.unl.contains(&from) || seq < self.seq {
            return;
        }
        self.received
            .entry((seq, round))
            .or_default()
            .entry(from)
            .or_insert(value);
        // A validator with nothing to say still participates once its list
        // starts a sequence.
        if seq == self.seq && !self.running {
            self.running = true;
            out.push(Action::SetTimer {
                kind: TimerKind::Round,
                after: self.cfg.round_len,
            });
        }
    }

    /// Monotone dead-message predicate: the sequence number only grows and
    /// per-round proposals keep the first value per sender.
    pub(crate) fn dead_message(&self, from: NodeId, msg: &Msg) -> bool {
        let Msg::Proposal { seq, round, .. } = msg;
        if !self.unl.contains(&from) {
            return true;
        }
        *seq < self.seq
            || self
                .received
                .get(&(*seq, *round))
                .map(|m| m.contains_key(&from))
                .unwrap_or(false)
    }

    fn close_round(&mut self, out: &mut Vec<Action>) {
        if !self.running {
            return;
        }
        let received = self
            .received
            .get(&(self.seq, self.round))
            .cloned()
            .unwrap_or_default();
        // A validator with nothing of its own adopts the plurality of what
        // it heard and joins the current round.
        if self.candidate.is_none() {
            if let Some((w, _)) = plurality(&received) {
                self.candidate = Some(w);
            }
            self.broadcast_proposal(out);
            out.push(Action::SetTimer {
                kind: TimerKind::Round,
                after: self.cfg.round_len,
            });
            return;
        }
        // Participation floor: a round only counts once at least half of
        // the trust list has been heard from; otherwise repropose and wait.
        if received.len() * 2 < self.unl.len() {
            self.broadcast_proposal(out);
            out.push(Action::SetTimer {
                kind: TimerKind::Round,
                after: self.cfg.round_len,
            });
            return;
        }
        let (winner, count) = plurality(&received).expect("floor guarantees non-empty");
        let pct = ROUND_THRESHOLDS_PCT[(self.round - 1) as usize];
        let clears = count * 100 >= pct as usize * received.len();

        if self.round as usize == ROUND_THRESHOLDS_PCT.len() {
            if clears {
                self.pending.remove(&winner);
                out.extend(self.sink.apply_tx(winner));
                self.seq += 1;
                self.round = 1;
                self.received = self.received.split_off(&(self.seq, 0));
                self.candidate = self.pick_candidate();
                self.running = false;
                if self.candidate.is_some() {
                    self.open_round(out);
                }
                return;
            }
            // No close: converge on the plurality and start over.
            self.candidate = Some(winner);
            self.round = 1;
        } else {
            if clears {
                self.candidate = Some(winner);
            }
            self.round += 1;
        }
        self.broadcast_proposal(out);
        out.push(Action::SetTimer {
            kind: TimerKind::Round,
            after: self.cfg.round_len,
        });
    }
}

/// Most supported value; ties break toward the smaller payload.
fn plurality(received: &BTreeMap<NodeId, Payload>) -> Option<(Payload, usize)> {
    let mut tally: BTreeMap<&Payload, usize> = BTreeMap::new();
    for v in received.values() {
        *tally.entry(v).or_default() += 1;
    }
    tally
        .iter()
        .map(|(p, c)| ((*p).clone(), *c))
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
}
