//! Federated block endorsement: one statically configured block generator
//! batches transactions into blocks; signers endorse at most one block per
//! height; a node appends a block once it holds `q` endorsements for it.
//!
//! With a correct generator this reduces to a Byzantine quorum system over
//! the signers (`q = 2f+1` of `n = 3f+1` by default). The generator is a
//! single point of failure by design: if it crashes the protocol halts, and
//! a generator that signs conflicting blocks can fork the ledger.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Action, Block, CommitPayload, Ctx, ProtocolMsg, ReplicaEvent, TimerKind};
use crate::types::{BlockId, NodeId, Payload};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    pub generator: NodeId,
    /// Endorsements needed to append a block.
    pub q: usize,
    pub retry: u64,
}

impl Config {
    pub fn for_n(n: usize) -> Config {
        let f = n.saturating_sub(1) / 3;
        Config {
            generator: NodeId(0),
            q: 2 * f + 1,
            retry: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Msg {
    Forward { tx: Payload },
    Proposal { block: Block },
    Endorse { height: u64, block: BlockId },
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Msg::Forward { tx } => write!(f, "forward({tx})"),
            Msg::Proposal { block } => write!(f, "proposal{{{block}}}"),
            Msg::Endorse { height, block } => write!(f, "endorse{{h={height} {block}}}"),
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
    endorsed_heights: BTreeSet<u64>,
    endorsements: BTreeMap<(u64, BlockId), BTreeSet<NodeId>>,
    /// Height the generator currently has a proposal outstanding for.
    outstanding: Option<u64>,
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
            endorsed_heights: BTreeSet::new(),
            endorsements: BTreeMap::new(),
            outstanding: None,
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

    pub fn handle(&mut self, ev: &ReplicaEvent, _ctx: &mut Ctx) -> Vec<Action> {
        let mut out = Vec::new();
        match ev {
            ReplicaEvent::Init => {}
            ReplicaEvent::Submit(tx) => self.on_tx(tx.clone(), &mut out),
            ReplicaEvent::Timer(TimerKind::Retry) => {
                if !self.pending.is_empty() {
                    if self.me == self.cfg.generator {
                        self.maybe_propose(&mut out);
                    } else {
                        for tx in &self.pending {
                            out.push(Action::Send {
                                to: self.cfg.generator,
                                msg: ProtocolMsg::Federated(Msg::Forward { tx: tx.clone() }),
                            });
                        }
                    }
                    self.arm_retry(&mut out);
                }
            }
            ReplicaEvent::Timer(_) => {}
            ReplicaEvent::Message { from, msg } => {
                if let ProtocolMsg::Federated(m) = msg {
                    self.on_msg(*from, m.clone(), &mut out);
                }
            }
        }
        out
    }

    fn on_tx(&mut self, tx: Payload, out: &mut Vec<Action>) {
        if self.committed_txs.contains(&tx) {
            return;
        }
        self.pending.insert(tx.clone());
        if self.me == self.cfg.generator {
            self.maybe_propose(out);
        } else {
            out.push(Action::Send {
                to: self.cfg.generator,
                msg: ProtocolMsg::Federated(Msg::Forward { tx }),
            });
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

    fn maybe_propose(&mut self, out: &mut Vec<Action>) {
        if self.outstanding == Some(self.height()) {
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
        self.outstanding = Some(block.height);
        let id = block.id();
        self.known.insert(id, block.clone());
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Federated(Msg::Proposal { block }),
        });
        self.endorse(self.height(), id, out);
        self.try_append(out);
    }

    /// One endorsement per height per signer.
    fn endorse(&mut self, height: u64, id: BlockId, out: &mut Vec<Action>) {
        if self.endorsed_heights.contains(&height) {
            return;
        }
        self.endorsed_heights.insert(height);
        self.endorsements
            .entry((height, id))
            .or_default()
            .insert(self.me);
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Federated(Msg::Endorse { height, block: id }),
        });
    }

    fn on_msg(&mut self, from: NodeId, msg: Msg, out: &mut Vec<Action>) {
        match msg {
            Msg::Forward { tx } => {
                if self.me == self.cfg.generator {
                    if !self.committed_txs.contains(&tx) {
                        self.pending.insert(tx);
                        self.maybe_propose(out);
                        self.arm_retry(out);
                    }
                }
            }
            Msg::Proposal { block } => {
                if from != self.cfg.generator || block.proposer != self.cfg.generator {
                    return;
                }
                let id = block.id();
                self.known.insert(id, block.clone());
                // Endorse only a block that extends our own chain at our
                // current height.
                if block.height == self.height() && block.parent == self.tip() {
                    self.endorse(block.height, id, out);
                }
                self.try_append(out);
            }
            Msg::Endorse { height, block } => {
                self.endorsements
                    .entry((height, block))
                    .or_default()
                    .insert(from);
                self.try_append(out);
            }
        }
    }

    fn try_append(&mut self, out: &mut Vec<Action>) {
        loop {
            let h = self.height();
            let tip = self.tip();
            let candidate = self
                .endorsements
                .iter()
                .filter(|((eh, id), who)| {
                    *eh == h && who.len() >= self.cfg.q && self.known.contains_key(id)
                })
                .map(|((_, id), _)| *id)
                .find(|id| self.known[id].parent == tip);
            let Some(id) = candidate else { break };
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
            if self.me == self.cfg.generator {
                self.outstanding = None;
                self.maybe_propose(out);
            }
        }
    }
}
