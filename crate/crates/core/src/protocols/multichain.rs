//! Permissioned diversity mining over the longest-chain rule.
//!
//! Any permitted node may mine a block after a random delay, subject to the
//! diversity window: a block is accepted only if its proposer does not
//! already appear among the most recent `ceil(rho * L)` blocks of the chain
//! it extends, and a well-behaved node will not even try. Nodes extend their
//! chain with the first valid block they receive and adopt a strictly
//! longer competing chain when they learn of one, so commits are not final:
//! the checker for this protocol is common-prefix up to a configured depth,
//! not append-only agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{Action, Block, CommitPayload, Ctx, ProtocolMsg, ReplicaEvent, TimerKind};
use crate::types::{BlockId, NodeId, Payload};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    /// Diversity parameter in percent (`rho`); the window is
    /// `ceil(rho/100 * L)` blocks.
    pub rho_pct: u32,
    /// Permitted-list length; defaults to `n`.
    pub list_len: Option<usize>,
    /// Mining delay range.
    pub mine_delay: (u64, u64),
}

impl Default for Config {
    fn default() -> Config {
        Config {
            rho_pct: 50,
            list_len: None,
            mine_delay: (6, 14),
        }
    }
}

impl Config {
    pub fn window(&self, n: usize) -> usize {
        let l = self.list_len.unwrap_or(n) as u64;
        (self.rho_pct as u64 * l).div_ceil(100) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Msg {
    TxGossip { tx: Payload },
    Mined { block: Block },
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Msg::TxGossip { tx } => write!(f, "tx({tx})"),
            Msg::Mined { block } => write!(f, "mined{{{block}}}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Replica {
    me: NodeId,
    n: usize,
    cfg: Config,
    blocks: BTreeMap<BlockId, Block>,
    /// Current best chain, genesis excluded.
    best: Vec<BlockId>,
    orphans: BTreeMap<BlockId, Vec<Block>>,
    pending: BTreeSet<Payload>,
    in_best: BTreeSet<Payload>,
    pub ledger_vec: Vec<CommitPayload>,
    mine_armed: bool,
}

impl Replica {
    pub fn new(me: NodeId, n: usize, cfg: Config) -> Replica {
        Replica {
            me,
            n,
            cfg,
            blocks: BTreeMap::new(),
            best: Vec::new(),
            orphans: BTreeMap::new(),
            pending: BTreeSet::new(),
            in_best: BTreeSet::new(),
            ledger_vec: Vec::new(),
            mine_armed: false,
        }
    }

    pub fn ledger(&self) -> &[CommitPayload] {
        &self.ledger_vec
    }

    pub fn best_chain(&self) -> &[BlockId] {
        &self.best
    }

    fn tip(&self) -> BlockId {
        self.best.last().copied().unwrap_or_else(Block::genesis_id)
    }

    /// Whether `miner` is allowed to extend the chain ending at `parent`.
    fn diversity_ok(&self, miner: NodeId, parent: BlockId) -> bool {
        let w = self.cfg.window(self.n);
        let mut cursor = parent;
        for _ in 0..w {
            if cursor == Block::genesis_id() {
                return true;
            }
            match self.blocks.get(&cursor) {
                Some(b) => {
                    if b.proposer == miner {
                        return false;
                    }
                    cursor = b.parent;
                }
                None => return true,
            }
        }
        true
    }

    fn mineable(&self) -> bool {
        self.diversity_ok(self.me, self.tip())
            && self.pending.iter().any(|t| !self.in_best.contains(t))
    }

    pub fn handle(&mut self, ev: &ReplicaEvent, ctx: &mut Ctx) -> Vec<Action> {
        let mut out = Vec::new();
        match ev {
            ReplicaEvent::Init => {}
            ReplicaEvent::Submit(tx) => {
                self.pending.insert(tx.clone());
                out.push(Action::Broadcast {
                    msg: ProtocolMsg::Mc(Msg::TxGossip { tx: tx.clone() }),
                });
                self.arm_mine(ctx, &mut out);
            }
            ReplicaEvent::Timer(TimerKind::Mine) => {
                self.mine_armed = false;
                self.mine(ctx, &mut out);
            }
            ReplicaEvent::Timer(_) => {}
            ReplicaEvent::Message { from, msg } => {
                if let ProtocolMsg::Mc(m) = msg {
                    self.on_msg(*from, m.clone(), ctx, &mut out);
                }
            }
        }
        out
    }

    fn arm_mine(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if !self.mine_armed && self.mineable() {
            self.mine_armed = true;
            let (lo, hi) = self.cfg.mine_delay;
            out.push(Action::SetTimer {
                kind: TimerKind::Mine,
                after: ctx.rand.range(lo, hi),
            });
        }
    }

    fn mine(&mut self, ctx: &mut Ctx, out: &mut Vec<Action>) {
        if !self.mineable() {
            return;
        }
        let txs: Vec<Payload> = self
            .pending
            .iter()
            .filter(|t| !self.in_best.contains(*t))
            .cloned()
            .collect();
        let block = Block {
            height: self.best.len() as u64,
            parent: self.tip(),
            proposer: self.me,
            txs,
        };
        self.blocks.insert(block.id(), block.clone());
        out.push(Action::Broadcast {
            msg: ProtocolMsg::Mc(Msg::Mined {
                block: block.clone(),
            }),
        });
        self.adopt_extension(block, out);
        self.arm_mine(ctx, out);
    }

    fn on_msg(&mut self, _from: NodeId, msg: Msg, ctx: &mut Ctx, out: &mut Vec<Action>) {
        match msg {
            Msg::TxGossip { tx } => {
                if !self.in_best.contains(&tx) {
                    self.pending.insert(tx);
                }
                self.arm_mine(ctx, out);
            }
            Msg::Mined { block } => {
                self.ingest(block, out);
                self.arm_mine(ctx, out);
            }
        }
    }

    fn ingest(&mut self, block: Block, out: &mut Vec<Action>) {
        let id = block.id();
        if self.blocks.contains_key(&id) {
            return;
        }
        let parent_known =
            block.parent == Block::genesis_id() || self.blocks.contains_key(&block.parent);
        if !parent_known {
            self.orphans.entry(block.parent).or_default().push(block);
            return;
        }
        if !self.diversity_ok(block.proposer, block.parent) {
            out.push(Action::Flag {
                note: format!(
                    "rejected block {id}: proposer {} inside diversity window",
                    block.proposer
                ),
            });
            return;
        }
        let expected_height = if block.parent == Block::genesis_id() {
            0
        } else {
            self.blocks[&block.parent].height + 1
        };
        if block.height != expected_height {
            return;
        }
        self.blocks.insert(id, block.clone());

        if block.parent == self.tip() {
            self.adopt_extension(block, out);
        } else if (block.height + 1) as usize > self.best.len() {
            // Strictly longer competing chain: reorganize onto it.
            self.reorg_to(id, out);
        }
        // A buffered child may now connect.
        if let Some(children) = self.orphans.remove(&id) {
            for child in children {
                self.ingest(child, out);
            }
        }
    }

    fn adopt_extension(&mut self, block: Block, out: &mut Vec<Action>) {
        let id = block.id();
        out.push(Action::Commit {
            index: block.height,
            payload: CommitPayload::block(&block),
        });
        self.ledger_vec.push(CommitPayload::block(&block));
        for tx in &block.txs {
            self.in_best.insert(tx.clone());
            self.pending.remove(tx);
        }
        self.best.push(id);
    }

    fn reorg_to(&mut self, new_tip: BlockId, out: &mut Vec<Action>) {
        let mut branch = Vec::new();
        let mut cursor = new_tip;
        while cursor != Block::genesis_id() {
            branch.push(cursor);
            cursor = self.blocks[&cursor].parent;
        }
        branch.reverse();
        let fork_at = self
            .best
            .iter()
            .zip(branch.iter())
            .take_while(|(a, b)| a == b)
            .count();
        let dropped: Vec<BlockId> = self.best[fork_at..].to_vec();
        let dropped_count = dropped.len();
        self.best.truncate(fork_at);
        self.ledger_vec.truncate(fork_at);
        // Transactions orphaned by the reorg become pending again.
        for id in dropped {
            for tx in &self.blocks[&id].txs {
                self.in_best.remove(tx);
                self.pending.insert(tx.clone());
            }
        }
        out.push(Action::Flag {
            note: format!("reorg to {new_tip} dropping {dropped_count} blocks"),
        });
        for id in branch[fork_at..].to_vec() {
            let b = self.blocks[&id].clone();
            self.adopt_extension(b, out);
        }
    }
}
