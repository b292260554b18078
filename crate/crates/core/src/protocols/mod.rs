//! Replica state machines, one per protocol, behind a uniform contract:
//! every replica is a pure `(state, event) -> (state, actions)` function
//! driven by the simulator. Checkers and the harness treat all protocols
//! alike through the emitted actions.

pub mod bcast_only;
pub mod federated;
pub mod multichain;
pub mod pbft;
pub mod quorumchain;
pub mod raft;
pub mod ripple;
pub mod tangaroa;

use std::collections::BTreeMap;
use std::fmt;

use crate::rng::RandStream;
use crate::types::{content_address, BlockId, NodeId, Payload, Tick};

/// Protocols available to scenarios. `Bcb`/`Brb` expose the bare broadcast
/// primitives as single-slot protocols so the schedule explorer can target
/// them directly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolId {
    RaftLite,
    TangaroaLite,
    PbftLite,
    Federated,
    QuorumChain,
    MultiChain,
    RippleRounds,
    Bcb,
    Brb,
}

impl ProtocolId {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolId::RaftLite => "raft_lite",
            ProtocolId::TangaroaLite => "tangaroa_lite",
            ProtocolId::PbftLite => "pbft_lite",
            ProtocolId::Federated => "federated",
            ProtocolId::QuorumChain => "quorumchain",
            ProtocolId::MultiChain => "multichain",
            ProtocolId::RippleRounds => "ripple_rounds",
            ProtocolId::Bcb => "bcb",
            ProtocolId::Brb => "brb",
        }
    }

    pub fn parse(s: &str) -> Option<ProtocolId> {
        Self::all().iter().copied().find(|p| p.as_str() == s)
    }

    pub fn all() -> &'static [ProtocolId] {
        &[
            ProtocolId::RaftLite,
            ProtocolId::TangaroaLite,
            ProtocolId::PbftLite,
            ProtocolId::Federated,
            ProtocolId::QuorumChain,
            ProtocolId::MultiChain,
            ProtocolId::RippleRounds,
            ProtocolId::Bcb,
            ProtocolId::Brb,
        ]
    }

    /// Longest-chain protocols commit blocks that may later be replaced;
    /// everything else appends final transaction sequences.
    pub fn non_final(self) -> bool {
        matches!(self, ProtocolId::MultiChain)
    }

    /// Protocols that commit whole blocks rather than single transactions.
    pub fn commits_blocks(self) -> bool {
        matches!(
            self,
            ProtocolId::Federated | ProtocolId::QuorumChain | ProtocolId::MultiChain
        )
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A block in the chain-structured protocols. The content address covers
/// height, parent, proposer and transactions, so equal ids imply equal
/// content (modeled collision-free).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Block {
    pub height: u64,
    pub parent: BlockId,
    pub proposer: NodeId,
    pub txs: Vec<Payload>,
}

impl Block {
    pub fn genesis_id() -> BlockId {
        BlockId(content_address(b"genesis"))
    }

    pub fn id(&self) -> BlockId {
        let mut s = format!("{}|{}|{}", self.height, self.parent, self.proposer);
        for tx in &self.txs {
            s.push('|');
            s.push_str(&tx.to_string());
        }
        BlockId(content_address(s.as_bytes()))
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "block{{h={} id={} parent={} by={} txs=[{}]}}",
            self.height,
            self.id(),
            self.parent,
            self.proposer,
            join(&self.txs)
        )
    }
}

pub(crate) fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Timer identities; setting a timer of the same kind replaces the previous
/// one at that node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimerKind {
    Election,
    Progress,
    Retry,
    Propose,
    Window,
    Mine,
    Round,
    Script(u8),
}

impl TimerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TimerKind::Election => "election",
            TimerKind::Progress => "progress",
            TimerKind::Retry => "retry",
            TimerKind::Propose => "propose",
            TimerKind::Window => "window",
            TimerKind::Mine => "mine",
            TimerKind::Round => "round",
            TimerKind::Script(_) => "script",
        }
    }
}

impl fmt::Display for TimerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimerKind::Script(i) => write!(f, "script{i}"),
            other => f.write_str(other.as_str()),
        }
    }
}

/// Every protocol's wire messages under one roof, so envelopes are one type.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProtocolMsg {
    Raft(raft::Msg),
    Tangaroa(tangaroa::Msg),
    Pbft(pbft::Msg),
    Federated(federated::Msg),
    Qc(quorumchain::Msg),
    Mc(multichain::Msg),
    Ripple(ripple::Msg),
    Bcast(crate::broadcast::BcastMsg),
}

impl fmt::Display for ProtocolMsg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolMsg::Raft(m) => write!(f, "raft/{m}"),
            ProtocolMsg::Tangaroa(m) => write!(f, "tang/{m}"),
            ProtocolMsg::Pbft(m) => write!(f, "pbft/{m}"),
            ProtocolMsg::Federated(m) => write!(f, "fed/{m}"),
            ProtocolMsg::Qc(m) => write!(f, "qc/{m}"),
            ProtocolMsg::Mc(m) => write!(f, "mc/{m}"),
            ProtocolMsg::Ripple(m) => write!(f, "rip/{m}"),
            ProtocolMsg::Bcast(m) => write!(f, "bcast/{m}"),
        }
    }
}

/// What a replica commits: a single transaction (total-order protocols) or
/// a whole block (chain protocols; non-final chains may re-emit heights on
/// reorganization).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CommitPayload {
    Tx(Payload),
    Block {
        id: BlockId,
        parent: BlockId,
        proposer: NodeId,
        txs: Vec<Payload>,
    },
}

impl CommitPayload {
    pub fn block(b: &Block) -> CommitPayload {
        CommitPayload::Block {
            id: b.id(),
            parent: b.parent,
            proposer: b.proposer,
            txs: b.txs.clone(),
        }
    }

    pub fn txs(&self) -> Vec<&Payload> {
        match self {
            CommitPayload::Tx(p) => vec![p],
            CommitPayload::Block { txs, .. } => txs.iter().collect(),
        }
    }
}

impl fmt::Display for CommitPayload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommitPayload::Tx(p) => write!(f, "{p}"),
            CommitPayload::Block {
                id,
                parent,
                proposer,
                txs,
            } => write!(
                f,
                "block{{id={id} parent={parent} by={proposer} txs=[{}]}}",
                join(txs)
            ),
        }
    }
}

/// Outputs of a replica step, applied by the simulator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    Send { to: NodeId, msg: ProtocolMsg },
    Broadcast { msg: ProtocolMsg },
    SetTimer { kind: TimerKind, after: u64 },
    Commit { index: u64, payload: CommitPayload },
    EnterView { view: u64 },
    Flag { note: String },
}

/// Inputs to a replica step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplicaEvent {
    Init,
    Submit(Payload),
    Message { from: NodeId, msg: ProtocolMsg },
    Timer(TimerKind),
}

/// Per-step context handed to replicas; the random stream is the node's own
/// split of the scenario seed.
pub struct Ctx<'a> {
    pub now: Tick,
    pub rand: &'a mut RandStream,
}

/// Per-protocol parameters. Defaults are derived from `n` where the
/// protocol prescribes a relation (for example `f = floor((n-1)/3)`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ProtocolConfig {
    Raft(raft::Config),
    Tangaroa(tangaroa::Config),
    Pbft(pbft::Config),
    Federated(federated::Config),
    Qc(quorumchain::Config),
    Mc(multichain::Config),
    Ripple(ripple::Config),
    Bcast(bcast_only::Config),
}

impl ProtocolConfig {
    pub fn default_for(protocol: ProtocolId, n: usize) -> ProtocolConfig {
        match protocol {
            ProtocolId::RaftLite => ProtocolConfig::Raft(raft::Config::default()),
            ProtocolId::TangaroaLite => ProtocolConfig::Tangaroa(tangaroa::Config::for_n(n)),
            ProtocolId::PbftLite => ProtocolConfig::Pbft(pbft::Config::for_n(n)),
            ProtocolId::Federated => ProtocolConfig::Federated(federated::Config::for_n(n)),
            ProtocolId::QuorumChain => ProtocolConfig::Qc(quorumchain::Config::for_n(n)),
            ProtocolId::MultiChain => ProtocolConfig::Mc(multichain::Config::default()),
            ProtocolId::RippleRounds => ProtocolConfig::Ripple(ripple::Config::default()),
            ProtocolId::Bcb => ProtocolConfig::Bcast(bcast_only::Config {
                reliable: false,
                sender: NodeId(0),
            }),
            ProtocolId::Brb => ProtocolConfig::Bcast(bcast_only::Config {
                reliable: true,
                sender: NodeId(0),
            }),
        }
    }

    pub fn id(&self) -> ProtocolId {
        match self {
            ProtocolConfig::Raft(_) => ProtocolId::RaftLite,
            ProtocolConfig::Tangaroa(_) => ProtocolId::TangaroaLite,
            ProtocolConfig::Pbft(_) => ProtocolId::PbftLite,
            ProtocolConfig::Federated(_) => ProtocolId::Federated,
            ProtocolConfig::Qc(_) => ProtocolId::QuorumChain,
            ProtocolConfig::Mc(_) => ProtocolId::MultiChain,
            ProtocolConfig::Ripple(_) => ProtocolId::RippleRounds,
            ProtocolConfig::Bcast(c) => {
                if c.reliable {
                    ProtocolId::Brb
                } else {
                    ProtocolId::Bcb
                }
            }
        }
    }
}

/// Uniform replica dispatch.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ReplicaState {
    Raft(raft::Replica),
    Tangaroa(tangaroa::Replica),
    Pbft(pbft::Replica),
    Federated(federated::Replica),
    Qc(quorumchain::Replica),
    Mc(multichain::Replica),
    Ripple(ripple::Replica),
    Bcast(bcast_only::Replica),
}

impl ReplicaState {
    pub fn new(config: &ProtocolConfig, me: NodeId, n: usize) -> ReplicaState {
        match config {
            ProtocolConfig::Raft(c) => ReplicaState::Raft(raft::Replica::new(me, n, c.clone())),
            ProtocolConfig::Tangaroa(c) => {
                ReplicaState::Tangaroa(tangaroa::Replica::new(me, n, c.clone()))
            }
            ProtocolConfig::Pbft(c) => ReplicaState::Pbft(pbft::Replica::new(me, n, c.clone())),
            ProtocolConfig::Federated(c) => {
                ReplicaState::Federated(federated::Replica::new(me, n, c.clone()))
            }
            ProtocolConfig::Qc(c) => ReplicaState::Qc(quorumchain::Replica::new(me, n, c.clone())),
            ProtocolConfig::Mc(c) => ReplicaState::Mc(multichain::Replica::new(me, n, c.clone())),
            ProtocolConfig::Ripple(c) => {
                ReplicaState::Ripple(ripple::Replica::new(me, n, c.clone()))
            }
            ProtocolConfig::Bcast(c) => {
                ReplicaState::Bcast(bcast_only::Replica::new(me, n, c.clone()))
            }
        }
    }

    pub fn handle(&mut self, ev: &ReplicaEvent, ctx: &mut Ctx) -> Vec<Action> {
        match self {
            ReplicaState::Raft(r) => r.handle(ev, ctx),
            ReplicaState::Tangaroa(r) => r.handle(ev, ctx),
            ReplicaState::Pbft(r) => r.handle(ev, ctx),
            ReplicaState::Federated(r) => r.handle(ev, ctx),
            ReplicaState::Qc(r) => r.handle(ev, ctx),
            ReplicaState::Mc(r) => r.handle(ev, ctx),
            ReplicaState::Ripple(r) => r.handle(ev, ctx),
            ReplicaState::Bcast(r) => r.handle(ev, ctx),
        }
    }

    /// True when delivering `msg` can never affect this replica, now or in
    /// any future state (the predicate must be monotone: once dead, always
    /// dead). The schedule explorer prunes such envelopes; protocols
    /// without a predicate return false.
    pub fn dead_message(&self, from: NodeId, msg: &ProtocolMsg) -> bool {
        match (self, msg) {
            (ReplicaState::Tangaroa(r), ProtocolMsg::Tangaroa(m)) => r.dead_message(from, m),
            (ReplicaState::Pbft(r), ProtocolMsg::Pbft(m)) => r.dead_message(from, m),
            (ReplicaState::Ripple(r), ProtocolMsg::Ripple(m)) => r.dead_message(from, m),
            (ReplicaState::Bcast(r), ProtocolMsg::Bcast(m)) => r.dead_message(from, m),
            _ => false,
        }
    }

    /// The committed sequence as the replica itself sees it. For chain
    /// protocols this is the current best chain (may shrink on reorg).
    pub fn ledger(&self) -> &[CommitPayload] {
        match self {
            ReplicaState::Raft(r) => r.ledger(),
            ReplicaState::Tangaroa(r) => r.ledger(),
            ReplicaState::Pbft(r) => r.ledger(),
            ReplicaState::Federated(r) => r.ledger(),
            ReplicaState::Qc(r) => r.ledger(),
            ReplicaState::Mc(r) => r.ledger(),
            ReplicaState::Ripple(r) => r.ledger(),
            ReplicaState::Bcast(r) => r.ledger(),
        }
    }
}

/// Shared ledger bookkeeping: committed bodies are deduplicated so a payload
/// reaches the application at most once per node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LedgerSink {
    pub ledger: Vec<CommitPayload>,
    pub seen: BTreeMap<Payload, u64>,
}

impl LedgerSink {
    /// Appends `p` unless its body was already applied; returns the Commit
    /// action on success.
    pub fn apply_tx(&mut self, p: Payload) -> Option<Action> {
        if self.seen.contains_key(&p) {
            return None;
        }
        let index = self.ledger.len() as u64;
        self.seen.insert(p.clone(), index);
        self.ledger.push(CommitPayload::Tx(p.clone()));
        Some(Action::Commit {
            index,
            payload: CommitPayload::Tx(p),
        })
    }
}
