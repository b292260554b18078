//! Maker/voter chain: designated block-makers propose after a random delay,
//! voters vote for every valid block extending their own chain (possibly
//! several per height), and a node appends whichever block passed the vote
//! threshold with the most votes when its voting window closes.
//!
//! The threshold is operator-set configuration, not protocol semantics.
//! Because voters approve every valid extension and tallies are evaluated
//! locally at window close, two makers plus asymmetric delivery can fork the
//! chain with every node honest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Action, Block, CommitPayload, Ctx, ProtocolMsg, ReplicaEvent, TimerKind};
use crate::types::{BlockId, NodeId, Payload};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    pub makers: Vec<NodeId>,
    /// Minimum votes a block needs; defaults to a strict majority of voters.
    pub threshold: usize,
    /// Voting window in ticks, measured from the first valid proposal seen
    /// at a height.
    pub window: u64,
    /// Maker delay before proposing, drawn uniformly.
    pub propose_delay: (u64, u64),
    pub retry: u64,
}

impl Config {
    pub fn for_n(n: usize) -> Config {
        Config {
            makers: vec![NodeId(0)],
            threshold: n / 2 + 1,
            window: 10,
            propose_delay: (3, 9),
            retry: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Msg {
    Forward { tx: Payload },
    Proposal { block: Block },
    Vote { height: u64, block: BlockId },
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Msg::Forward { tx } => write!(f, "forward({tx})"),
            Msg::Proposal { block } => write!(f, "proposal{{{block}}}"),
            Msg::Vote { height, block } => write!(f, "vote{{h={height} {block}}}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Replica {
    me: NodeId,
    n: usize,
    cfg: Config,
    chain: Vec<Block>,
    pub ledger_vec: Vec<CommitPayload>,
    committed_txs: BTreeSet<Payload>,
    pending: BTreeSet<Payload>,
    known: BTreeMap<BlockId, Block>,
    votes: BTreeMap<(u64, BlockId), BTreeSet<NodeId>>,
    my_votes: BTreeSet<(u64, BlockId)>,
    window_open_for: Option<u64>,
    propose_armed: bool,
}

impl Replica {
    pub fn new(me: NodeId, n: usize, cfg: Config) -> Replica {
        Replica {
            me,
            n,
            cfg,
            chain: Vec::new(),
            ledger_vec: Vec::new(),
            committed_txs: BTreeSet::new(),
            pending: BTreeSet::new(),
            known: BTreeMap::new(),
            votes: BTreeMap::new(),
            my_votes: BTreeSet::new(),
            window_open_for: None,
            propose_armed: false,
        }
    }

    pub fn ledger(&self) -> &[CommitPayload] {
        &self.ledger_vec
    }

    fn tip(&self) -> BlockId {
        self.chain.last().map(|b| b.id()).unwrap_or_else(Block::genesis_id)
    }

    fn height(&self) -> u64 {
        self.chain.len() as u64
    }

    fn is_maker(&self) -> bool {
        self.cfg.makers.contains(&self.me)
    }

    pub fn handle(&mut self, ev: &ReplicaEvent, ctx: &mut Ctx) -> Vec<Action> {
        let mut out = Vec::new();
        match ev {
            ReplicaEvent::Init => {}
            ReplicaEvent::Submit(tx) => self.on_tx(tx.clone(), ctx, &mut out),
            ReplicaEvent::Timer(TimerKind::Propose) => {
                self.propose_armed = false;
                self.maybe_propose(ctx, &mut out);
            }
            ReplicaEvent::Timer(TimerKind::Window) => self.close_window(ctx, &mut out),
            ReplicaEvent::Timer(TimerKind::Retry) => {
                if !self.pending.is_empty() {
                    self.gossip_pending(&mut out);
                    self.arm_retry(&mut out);
                }
            }
            ReplicaEvent::Timer(_) => {}
            ReplicaEvent::Message { from, msg } => {
                if let ProtocolMsg::Qc(m) = msg {
                    self.on_msg(*from, m.clone(), ctx, &mut out);
                }
            }
        }
        out
    }

    fn on_tx(&mut self, tx: Payload, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if self.committed_txs.contains(&tx) {
            return;
        }
        self.pending.insert(tx.clone());
        // Route transactions to the makers.
        for m in self.cfg.makers.clone() {
            if m != self.me {
                out.push(Action::Send {
                    to: m,
                    msg: ProtocolMsg::Qc(Msg::Forward { tx: tx.clone() }),
                });
            }
        }
        self.arm_propose(ctx, out);
        self.arm_retry(out);
    }

    fn gossip_pending(&mut self, out: &mut Vec<Action>) {
        for m in self.cfg.makers.clone() {
            if m != self.me {
                for tx in &self.pending {
                    out.push(Action::Send {
                        to: m,
                        msg: ProtocolMsg::Qc(Msg::Forward { tx: tx.clone() }),
                    });
                }
            }
        }
    }

    fn arm_retry(&self, out: &mut Vec<Action>) {
        if !self.pending.is_empty() {
            out.push(Action::SetTimer {
                kind: TimerKind::Retry,
                after: self.cfg.retry,
            });
        }
    }

    fn arm_propose(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if self.is_maker() && !self.propose_armed && !self.pending.is_empty() {
            self.propose_armed = true;
            let (lo, hi) = self.cfg.propose_delay;
            out.push(Action::SetTimer {
                kind: TimerKind::Propose,
                after: ctx.rand.range(lo, hi),
            });
        }
    }

    fn maybe_propose(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if !self.is_maker() {
            return;
        }
        let txs: Vec<Payload> = self
            .pending
            .iter()
            .filter(|t| !self.committed_txs.contains(*t))
            .cloned()
            .collect();
        if txs.is_empty() {
            return;
        }
        let block = Block {
            height: self.height(),
            parent: self.tip(),
            proposer: self.me,
            txs,
        };
        let id = block.id();
        self.known.insert(id, block.clone());
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Qc(Msg::Proposal { block }),
        });
        self.consider_block(id, out);
        let _ = ctx;
    }

    fn on_msg(&mut self, from: NodeId, msg: Msg, ctx: &mut Ctx, out: &mut Vec<Action>) {
        match msg {
            Msg::Forward { tx } => {
                if !self.committed_txs.contains(&tx) {
                    self.pending.insert(tx);
                    self.arm_propose(ctx, out);
                }
            }
            Msg::Proposal { block } => {
                if !self.cfg.makers.contains(&block.proposer) || block.proposer != from {
                    return;
                }
                let id = block.id();
                self.known.insert(id, block);
                self.consider_block(id, out);
            }
            Msg::Vote { height, block } => {
                self.votes.entry((height, block)).or_default().insert(from);
            }
        }
    }

    /// Vote for every known valid block extending our chain at our height,
    /// and open the voting window when the first one shows up.
    fn consider_block(&mut self, id: BlockId, out: &mut Vec<Action>) {
        let h = self.height();
        let tip = self.tip();
        let Some(block) = self.known.get(&id) else { return };
        if block.height != h || block.parent != tip {
            return;
        }
        if self.my_votes.insert((h, id)) {
            self.votes.entry((h, id)).or_default().insert(self.me);
            out.push(Action::Broadcast {
                msg: ProtocolMsg::Qc(Msg::Vote { height: h, block: id }),
            });
        }
        if self.window_open_for != Some(h) {
            self.window_open_for = Some(h);
            out.push(Action::SetTimer {
                kind: TimerKind::Window,
                after: self.cfg.window,
            });
        }
    }

    fn close_window(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        let h = self.height();
        if self.window_open_for != Some(h) {
            return;
        }
        let tip = self.tip();
        let mut qualified: Vec<(usize, BlockId)> = self
            .votes
            .iter()
            .filter(|((vh, id), who)| {
                *vh == h
                    && who.len() >= self.cfg.threshold
                    && self
                        .known
                        .get(id)
                        .map(|b| b.parent == tip)
                        .unwrap_or(false)
            })
            .map(|((_, id), who)| (who.len(), *id))
            .collect();
        if qualified.is_empty() {
            // Nothing cleared the threshold yet; keep the window open.
            out.push(Action::SetTimer {
                kind: TimerKind::Window,
                after: self.cfg.window,
            });
            return;
        }
        // Most votes wins; ties break toward the lowest content address and
        // are flagged in the trace.
        qualified.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        if qualified.len() > 1 && qualified[0].0 == qualified[1].0 {
            out.push(Action::Flag {
                note: format!(
                    "vote tie at height {h}: {} vs {}",
                    qualified[0].1, qualified[1].1
                ),
            });
        }
        let id = qualified[0].1;
        let block = self.known[&id].clone();
        for tx in &block.txs {
            self.pending.remove(tx);
            self.committed_txs.insert(tx.clone());
        }
        out.push(Action::Commit {
            index: block.height,
            payload: CommitPayload::block(&block),
        });
        self.ledger_vec.push(CommitPayload::block(&block));
        self.chain.push(block);
        self.window_open_for = None;
        // Blocks proposed for the new height may already be buffered, and a
        // maker with leftover transactions keeps going.
        let ids: Vec<BlockId> = self.known.keys().copied().collect();
        for id in ids {
            self.consider_block(id, out);
        }
        self.arm_propose(ctx, out);
    }
}
