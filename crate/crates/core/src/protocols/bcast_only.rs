//! The bare broadcast primitives exposed as single-slot protocols, so the
//! schedule explorer and the checkers can exercise consistent vs reliable
//! broadcast in isolation.

use std::fmt;

use super::{Action, CommitPayload, Ctx, LedgerSink, ProtocolMsg, ReplicaEvent};
use crate::broadcast::{BcastAction, BcastMsg, BcbInstance, BrbInstance, QuorumParams};
use crate::types::NodeId;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Config {
    /// False: consistent broadcast (single echo round). True: reliable
    /// broadcast (echo + ready with amplification).
    pub reliable: bool,
    pub sender: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Inst {
    Bcb(BcbInstance),
    Brb(BrbInstance),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Replica {
    me: NodeId,
    cfg: Config,
    inst: Inst,
    started: bool,
    sink: LedgerSink,
}

impl Replica {
    pub fn new(me: NodeId, n: usize, cfg: Config) -> Replica {
        let params = QuorumParams {
            n,
            f: n.saturating_sub(1) / 3,
        };
        let inst = if cfg.reliable {
            Inst::Brb(BrbInstance::new(me, cfg.sender, params))
        } else {
            Inst::Bcb(BcbInstance::new(me, cfg.sender, params))
        };
        Replica {
            me,
            cfg,
            inst,
            started: false,
            sink: LedgerSink::default(),
        }
    }

    pub fn ledger(&self) -> &[CommitPayload] {
        &self.sink.ledger
    }

    pub fn handle(&mut self, ev: &ReplicaEvent, _ctx: &mut Ctx) -> Vec<Action> {
        let mut out = Vec::new();
        match ev {
            ReplicaEvent::Submit(tx) if self.me == self.cfg.sender && !self.started => {
                self.started = true;
                out.push(Action::Broadcast {
                    msg: ProtocolMsg::Bcast(BcastMsg::Send(tx.clone())),
                });
                let acts = self.feed(self.me, &BcastMsg::Send(tx.clone()));
                self.consume(acts, &mut out);
            }
            ReplicaEvent::Message { from, msg } => {
                if let ProtocolMsg::Bcast(m) = msg.clone() {
                    let acts = self.feed(*from, &m);
                    self.consume(acts, &mut out);
                }
            }
            _ => {}
        }
        out
    }

    /// Monotone dead-message predicate: instances latch their send and
    /// their delivery, and attestation sets only grow.
    pub(crate) fn dead_message(&self, from: NodeId, msg: &BcastMsg) -> bool {
        match &self.inst {
            Inst::Bcb(i) => i.dead_message(from, msg),
            Inst::Brb(i) => i.dead_message(from, msg),
        }
    }

    fn feed(&mut self, from: NodeId, msg: &BcastMsg) -> Vec<BcastAction> {
        match &mut self.inst {
            Inst::Bcb(i) => i.handle(from, msg),
            Inst::Brb(i) => i.handle(from, msg),
        }
    }

    fn consume(&mut self, acts: Vec<BcastAction>, out: &mut Vec<Action>) {
        for act in acts {
            match act {
                BcastAction::Echo(p) => out.push(Action::Broadcast {
                    msg: ProtocolMsg::Bcast(BcastMsg::Echo(p)),
                }),
                BcastAction::Ready(p) => out.push(Action::Broadcast {
                    msg: ProtocolMsg::Bcast(BcastMsg::Ready(p)),
                }),
                BcastAction::Deliver(p) => {
                    out.extend(self.sink.apply_tx(p));
                }
            }
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} sender={}",
            if self.reliable { "brb" } else { "bcb" },
            self.sender
        )
    }
}
