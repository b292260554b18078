//! Byzantine strategies, the packaged counterexample scenarios, and the
//! bounded exhaustive schedule explorer.
//!
//! A strategy may emit any protocol-well-formed message, but only
//! authenticated as the compromised node itself: emissions go through the
//! same action pipeline as correct replicas, and the simulator stamps the
//! sender. Certificates and vote sets embedded in emitted messages are
//! assembled exclusively from genuinely received material.

pub mod explore;
pub mod scenarios;

use std::collections::{BTreeMap, BTreeSet};

use crate::protocols::{
    federated, pbft, quorumchain, ripple, tangaroa, Action, Block, Ctx, ProtocolConfig,
    ProtocolMsg, ReplicaEvent, TimerKind,
};
use crate::types::{NodeId, Payload, Tick};

/// Reusable adversarial behaviors. Payload bodies (`m`, `m2`) are the
/// template alphabet the strategy plays with; payloads it invents carry its
/// own origin tag.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Passive,
    /// As the leader of the starting view: replicate `m` to a minority so
    /// exactly one victim commits, then go silent and help whoever tries to
    /// take over.
    EquivocatingLeader { m: String, m2: String },
    /// Win every election instantly by self-nominating at view start, then
    /// order nothing.
    RushingSilentLeader,
    /// As the block generator: sign two blocks at the same height toward
    /// disjoint signer subsets. As a signer: endorse everything, including
    /// conflicting blocks.
    ForkingGenerator { m: String, m2: String },
    /// Mine a private chain and release it once it is strictly longer than
    /// the honest chain, reverting committed history.
    LongestChainTakeover {
        /// Honest-chain depth to let build up before releasing.
        lead: u64,
    },
    /// Propose conflicting values to two halves of the network, each round
    /// or height.
    ConflictingProposer { m: String, m2: String },
}

impl Strategy {
    pub fn canonical(&self) -> String {
        match self {
            Strategy::Passive => "passive".into(),
            Strategy::EquivocatingLeader { m, m2 } => format!("equivocating_leader {m} {m2}"),
            Strategy::RushingSilentLeader => "rushing_silent_leader".into(),
            Strategy::ForkingGenerator { m, m2 } => format!("forking_generator {m} {m2}"),
            Strategy::LongestChainTakeover { lead } => format!("longest_chain_takeover {lead}"),
            Strategy::ConflictingProposer { m, m2 } => format!("conflicting_proposer {m} {m2}"),
        }
    }

    pub fn parse(s: &str) -> Option<Strategy> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        match toks.as_slice() {
            ["passive"] => Some(Strategy::Passive),
            ["equivocating_leader", m, m2] => Some(Strategy::EquivocatingLeader {
                m: m.to_string(),
                m2: m2.to_string(),
            }),
            ["rushing_silent_leader"] => Some(Strategy::RushingSilentLeader),
            ["forking_generator", m, m2] => Some(Strategy::ForkingGenerator {
                m: m.to_string(),
                m2: m2.to_string(),
            }),
            ["longest_chain_takeover", lead] => lead
                .parse()
                .ok()
                .map(|lead| Strategy::LongestChainTakeover { lead }),
            ["conflicting_proposer", m, m2] => Some(Strategy::ConflictingProposer {
                m: m.to_string(),
                m2: m2.to_string(),
            }),
            _ => None,
        }
    }
}

/// Everything an adversarial node has legitimately learned; the only
/// material it may embed in certificates or vote sets.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Knowledge {
    /// Votes received per view (as a nominee).
    pub votes: BTreeMap<u64, BTreeSet<NodeId>>,
    /// Prepare attestations seen: (view, slot, value) -> attesters.
    pub prepares: BTreeMap<(u64, u64, pbft::SlotValue), BTreeSet<NodeId>>,
    /// Highest election view observed (nominations or new-leader claims).
    pub max_view_seen: u64,
    /// Nominations observed: who asked for votes for which view.
    pub nominations: BTreeSet<(u64, NodeId)>,
    /// Payloads observed in any message.
    pub payloads: BTreeSet<Payload>,
    /// Blocks observed (for chain protocols).
    pub blocks: BTreeMap<crate::types::BlockId, Block>,
    /// Highest honest chain height observed (blocks counted from 1).
    pub honest_len: u64,
    /// Latest (seq, round) observed in round-voting protocols.
    pub round_pos: (u64, u8),
}

impl Knowledge {
    pub fn observe(&mut self, _from: NodeId, msg: &ProtocolMsg) {
        match msg {
            ProtocolMsg::Tangaroa(m) => match m {
                tangaroa::Msg::Vote { view } => {
                    self.max_view_seen = self.max_view_seen.max(*view);
                }
                tangaroa::Msg::Nominate { view } => {
                    self.max_view_seen = self.max_view_seen.max(*view);
                    self.nominations.insert((*view, _from));
                }
                tangaroa::Msg::NewLeader { view, .. } => {
                    self.max_view_seen = self.max_view_seen.max(*view);
                }
                tangaroa::Msg::Append { tx, .. } | tangaroa::Msg::Echo { tx, .. } => {
                    self.payloads.insert(tx.clone());
                }
                tangaroa::Msg::Forward { tx } => {
                    self.payloads.insert(tx.clone());
                }
            },
            ProtocolMsg::Pbft(m) => match m {
                pbft::Msg::PrePrepare { view, slot, tx } => {
                    self.prepares
                        .entry((*view, *slot, pbft::SlotValue::Tx(tx.clone())))
                        .or_default()
                        .insert(_from);
                    self.payloads.insert(tx.clone());
                }
                pbft::Msg::Prepare { view, slot, value } => {
                    self.prepares
                        .entry((*view, *slot, value.clone()))
                        .or_default()
                        .insert(_from);
                }
                pbft::Msg::Forward { tx } => {
                    self.payloads.insert(tx.clone());
                }
                _ => {}
            },
            ProtocolMsg::Mc(multichain) => {
                if let crate::protocols::multichain::Msg::Mined { block } = multichain {
                    self.blocks.insert(block.id(), block.clone());
                    self.honest_len = self.honest_len.max(block.height + 1);
                }
            }
            ProtocolMsg::Ripple(ripple::Msg::Proposal { seq, round, .. }) => {
                if (*seq, *round) > self.round_pos {
                    self.round_pos = (*seq, *round);
                }
            }
            _ => {}
        }
    }
}

/// Drives one adversarial node in simulation mode: reacts to deliveries and
/// script timers according to the configured strategy.
#[derive(Clone, Debug)]
pub struct ByzDriver {
    strategy: Strategy,
    me: NodeId,
    n: usize,
    config: ProtocolConfig,
    pub knowledge: Knowledge,
    // scratch
    rush_target: u64,
    announced: BTreeSet<u64>,
    equivocated_rounds: BTreeSet<(u64, u8)>,
    private_chain: Vec<Block>,
    released: bool,
    step: u32,
}

impl ByzDriver {
    pub fn new(strategy: Strategy, me: NodeId, n: usize, config: ProtocolConfig) -> ByzDriver {
        ByzDriver {
            strategy,
            me,
            n,
            config,
            knowledge: Knowledge::default(),
            rush_target: 0,
            announced: BTreeSet::new(),
            equivocated_rounds: BTreeSet::new(),
            private_chain: Vec::new(),
            released: false,
            step: 0,
        }
    }

    fn others(&self) -> Vec<NodeId> {
        (0..self.n)
            .map(NodeId::from_index)
            .filter(|id| *id != self.me)
            .collect()
    }

    /// First half / second half of the other nodes, the two audiences for
    /// equivocation.
    fn halves(&self) -> (Vec<NodeId>, Vec<NodeId>) {
        let others = self.others();
        let mid = others.len().div_ceil(2);
        (others[..mid].to_vec(), others[mid..].to_vec())
    }

    fn pay(&self, body: &str) -> Payload {
        Payload::new(self.me, body.to_string())
    }

    /// Exploration mode: the node's behavior belongs to the explorer's
    /// templates; deliveries only grow its knowledge.
    pub fn observe_only(&mut self, ev: &ReplicaEvent) {
        if let ReplicaEvent::Message { from, msg } = ev {
            self.knowledge.observe(*from, msg);
        }
    }

    pub fn handle(&mut self, ev: &ReplicaEvent, ctx: &mut Ctx) -> Vec<Action> {
        if let ReplicaEvent::Message { from, msg } = ev {
            self.knowledge.observe(*from, msg);
        }
        match self.strategy.clone() {
            Strategy::Passive => Vec::new(),
            Strategy::EquivocatingLeader { m, m2 } => self.equivocating_leader(ev, &m, &m2),
            Strategy::RushingSilentLeader => self.rushing(ev),
            Strategy::ForkingGenerator { m, m2 } => self.forking_generator(ev, &m, &m2),
            Strategy::LongestChainTakeover { lead } => self.takeover(ev, lead, ctx.now),
            Strategy::ConflictingProposer { m, m2 } => self.conflicting(ev, &m, &m2),
        }
    }

    // ------------------------------------------------------------------

    fn equivocating_leader(&mut self, ev: &ReplicaEvent, m: &str, m2: &str) -> Vec<Action> {
        match &self.config {
            ProtocolConfig::Tangaroa(_) => self.equivocate_tangaroa(ev, m),
            ProtocolConfig::Pbft(cfg) => self.equivocate_pbft(ev, cfg.initial_view, m),
            ProtocolConfig::Raft(_) => self.equivocate_raft(ev, m, m2),
            _ => Vec::new(),
        }
    }

    /// As initial leader: replicate `m` so that exactly the first correct
    /// node reaches the echo quorum; then support any takeover and echo the
    /// new leader's proposals back to it only.
    fn equivocate_tangaroa(&mut self, ev: &ReplicaEvent, m: &str) -> Vec<Action> {
        let mut out = Vec::new();
        let others = self.others();
        match ev {
            ReplicaEvent::Init => out.push(Action::SetTimer {
                kind: TimerKind::Script(0),
                after: 1,
            }),
            ReplicaEvent::Timer(TimerKind::Script(0)) => {
                let victim = others[0];
                let append = tangaroa::Msg::Append {
                    view: 1,
                    slot: 0,
                    tx: self.pay(m),
                };
                for to in others.iter().take(2) {
                    out.push(Action::Send {
                        to: *to,
                        msg: ProtocolMsg::Tangaroa(append.clone()),
                    });
                }
                out.push(Action::Send {
                    to: victim,
                    msg: ProtocolMsg::Tangaroa(tangaroa::Msg::Echo {
                        view: 1,
                        slot: 0,
                        tx: self.pay(m),
                    }),
                });
            }
            ReplicaEvent::Message { from, msg } => match msg {
                ProtocolMsg::Tangaroa(tangaroa::Msg::Nominate { view }) => {
                    // Help any election along.
                    out.push(Action::Send {
                        to: *from,
                        msg: ProtocolMsg::Tangaroa(tangaroa::Msg::Vote { view: *view }),
                    });
                }
                ProtocolMsg::Tangaroa(tangaroa::Msg::Append { view, slot, tx })
                    if *view > 1 =>
                {
                    // Echo the new leader's proposal to the leader alone,
                    // completing its quorum while starving everyone else.
                    out.push(Action::Send {
                        to: *from,
                        msg: ProtocolMsg::Tangaroa(tangaroa::Msg::Echo {
                            view: *view,
                            slot: *slot,
                            tx: tx.clone(),
                        }),
                    });
                }
                _ => {}
            },
            _ => {}
        }
        out
    }

    /// Same shape against the three-phase protocol: push one victim over
    /// the commit threshold in the starting view, then vanish.
    fn equivocate_pbft(&mut self, ev: &ReplicaEvent, view: u64, m: &str) -> Vec<Action> {
        let mut out = Vec::new();
        let others = self.others();
        match ev {
            ReplicaEvent::Init => out.push(Action::SetTimer {
                kind: TimerKind::Script(0),
                after: 1,
            }),
            ReplicaEvent::Timer(TimerKind::Script(0)) => {
                let victim = others[0];
                for to in others.iter().take(2) {
                    out.push(Action::Send {
                        to: *to,
                        msg: ProtocolMsg::Pbft(pbft::Msg::PrePrepare {
                            view,
                            slot: 0,
                            tx: self.pay(m),
                        }),
                    });
                }
                out.push(Action::Send {
                    to: victim,
                    msg: ProtocolMsg::Pbft(pbft::Msg::Prepare {
                        view,
                        slot: 0,
                        value: pbft::SlotValue::Tx(self.pay(m)),
                    }),
                });
                out.push(Action::SetTimer {
                    kind: TimerKind::Script(1),
                    after: 2,
                });
            }
            ReplicaEvent::Timer(TimerKind::Script(1)) => {
                let victim = others[0];
                out.push(Action::Send {
                    to: victim,
                    msg: ProtocolMsg::Pbft(pbft::Msg::CommitVote {
                        view,
                        slot: 0,
                        value: pbft::SlotValue::Tx(self.pay(m)),
                    }),
                });
            }
            _ => {}
        }
        out
    }

    /// Crash-tolerant ordering trusts its peers; a fake high-term leader
    /// with conflicting logs and an advanced commit index forks it in one
    /// message per target.
    fn equivocate_raft(&mut self, ev: &ReplicaEvent, m: &str, m2: &str) -> Vec<Action> {
        use crate::protocols::raft::{Entry, EntryData, Msg};
        let mut out = Vec::new();
        if let ReplicaEvent::Init = ev {
            out.push(Action::SetTimer {
                kind: TimerKind::Script(0),
                after: 1,
            });
        }
        if let ReplicaEvent::Timer(TimerKind::Script(0)) = ev {
            let (g1, g2) = self.halves();
            for (group, body) in [(g1, m), (g2, m2)] {
                let entry = Entry {
                    term: 99,
                    data: EntryData::Tx(self.pay(body)),
                };
                for to in group {
                    out.push(Action::Send {
                        to,
                        msg: ProtocolMsg::Raft(Msg::Append {
                            term: 99,
                            prev_idx: 0,
                            prev_term: 0,
                            entries: vec![entry.clone()],
                            commit: 1,
                        }),
                    });
                }
            }
        }
        out
    }

    /// Self-nominate the instant a view opens, announce leadership as soon
    /// as a majority of votes arrives, then order nothing and immediately
    /// rush the next view. Correct nodes cannot audit the timeout, so the
    /// rusher wins every election.
    fn rushing(&mut self, ev: &ReplicaEvent) -> Vec<Action> {
        if !matches!(self.config, ProtocolConfig::Tangaroa(_)) {
            return Vec::new(); // silence is the whole strategy elsewhere
        }
        let mut out = Vec::new();
        let majority = self.n / 2 + 1;
        match ev {
            ReplicaEvent::Init => {
                self.rush_target = 2;
                out.push(Action::Broadcast {
                    msg: ProtocolMsg::Tangaroa(tangaroa::Msg::Nominate { view: 2 }),
                });
            }
            ReplicaEvent::Message { from, msg } => match msg {
                ProtocolMsg::Tangaroa(tangaroa::Msg::Vote { view }) => {
                    let votes = self.knowledge.votes.entry(*view).or_default();
                    votes.insert(*from);
                    votes.insert(self.me);
                    if votes.len() >= majority && !self.announced.contains(view) {
                        self.announced.insert(*view);
                        let votes = votes.clone();
                        out.push(Action::Broadcast {
                            msg: ProtocolMsg::Tangaroa(tangaroa::Msg::NewLeader {
                                view: *view,
                                votes,
                            }),
                        });
                        // Rush the next view before anyone else can.
                        let next = self.rush_target.max(*view) + 1;
                        self.rush_target = next;
                        out.push(Action::Broadcast {
                            msg: ProtocolMsg::Tangaroa(tangaroa::Msg::Nominate { view: next }),
                        });
                    }
                }
                ProtocolMsg::Tangaroa(tangaroa::Msg::Nominate { view }) => {
                    // Outbid any competing nomination.
                    if *view >= self.rush_target {
                        let next = *view + 1;
                        self.rush_target = next;
                        out.push(Action::Broadcast {
                            msg: ProtocolMsg::Tangaroa(tangaroa::Msg::Nominate { view: next }),
                        });
                    }
                }
                _ => {}
            },
            _ => {}
        }
        out
    }

    fn forking_generator(&mut self, ev: &ReplicaEvent, m: &str, m2: &str) -> Vec<Action> {
        let ProtocolConfig::Federated(cfg) = &self.config else {
            return Vec::new();
        };
        let mut out = Vec::new();
        if cfg.generator == self.me {
            match ev {
                ReplicaEvent::Init => out.push(Action::SetTimer {
                    kind: TimerKind::Script(0),
                    after: 2,
                }),
                ReplicaEvent::Timer(TimerKind::Script(0)) => {
                    let (g1, g2) = self.halves();
                    for (group, body) in [(g1, m), (g2, m2)] {
                        let block = Block {
                            height: 0,
                            parent: Block::genesis_id(),
                            proposer: self.me,
                            txs: vec![self.pay(body)],
                        };
                        let id = block.id();
                        for to in group {
                            out.push(Action::Send {
                                to,
                                msg: ProtocolMsg::Federated(federated::Msg::Proposal {
                                    block: block.clone(),
                                }),
                            });
                            out.push(Action::Send {
                                to,
                                msg: ProtocolMsg::Federated(federated::Msg::Endorse {
                                    height: 0,
                                    block: id,
                                }),
                            });
                        }
                    }
                }
                _ => {}
            }
        } else if let ReplicaEvent::Message { msg, .. } = ev {
            // Colluding signer: endorse every block it sees, conflicting or
            // not, toward everyone.
            if let ProtocolMsg::Federated(federated::Msg::Proposal { block }) = msg {
                out.push(Action::Broadcast {
                    msg: ProtocolMsg::Federated(federated::Msg::Endorse {
                        height: block.height,
                        block: block.id(),
                    }),
                });
            }
        }
        out
    }

    fn takeover(&mut self, ev: &ReplicaEvent, lead: u64, _now: Tick) -> Vec<Action> {
        if !matches!(self.config, ProtocolConfig::Mc(_)) {
            return Vec::new();
        }
        let mut out = Vec::new();
        match ev {
            ReplicaEvent::Init => out.push(Action::SetTimer {
                kind: TimerKind::Script(0),
                after: 1,
            }),
            ReplicaEvent::Timer(TimerKind::Script(0)) if !self.released => {
                // Extend the private chain by one block per tick.
                self.step += 1;
                let parent = self
                    .private_chain
                    .last()
                    .map(|b| b.id())
                    .unwrap_or_else(Block::genesis_id);
                let block = Block {
                    height: self.private_chain.len() as u64,
                    parent,
                    proposer: self.me,
                    txs: vec![self.pay(&format!("adv-{}", self.step))],
                };
                self.private_chain.push(block);
                let honest = self.knowledge.honest_len;
                if honest >= lead && self.private_chain.len() as u64 > honest {
                    self.released = true;
                    for b in &self.private_chain {
                        out.push(Action::Broadcast {
                            msg: ProtocolMsg::Mc(crate::protocols::multichain::Msg::Mined {
                                block: b.clone(),
                            }),
                        });
                    }
                } else {
                    out.push(Action::SetTimer {
                        kind: TimerKind::Script(0),
                        after: 1,
                    });
                }
            }
            _ => {}
        }
        out
    }

    fn conflicting(&mut self, ev: &ReplicaEvent, m: &str, m2: &str) -> Vec<Action> {
        let mut out = Vec::new();
        match &self.config {
            ProtocolConfig::Qc(_) => {
                if let ReplicaEvent::Init = ev {
                    out.push(Action::SetTimer {
                        kind: TimerKind::Script(0),
                        after: 2,
                    });
                }
                if let ReplicaEvent::Timer(TimerKind::Script(0)) = ev {
                    let (g1, g2) = self.halves();
                    for (group, body) in [(g1, m), (g2, m2)] {
                        let block = Block {
                            height: 0,
                            parent: Block::genesis_id(),
                            proposer: self.me,
                            txs: vec![self.pay(body)],
                        };
                        let id = block.id();
                        for to in group {
                            out.push(Action::Send {
                                to,
                                msg: ProtocolMsg::Qc(quorumchain::Msg::Proposal {
                                    block: block.clone(),
                                }),
                            });
                            out.push(Action::Send {
                                to,
                                msg: ProtocolMsg::Qc(quorumchain::Msg::Vote {
                                    height: 0,
                                    block: id,
                                }),
                            });
                        }
                    }
                }
            }
            ProtocolConfig::Ripple(_) => {
                // Feed each half a different value, round after round.
                if let ReplicaEvent::Message { msg, .. } = ev {
                    if let ProtocolMsg::Ripple(ripple::Msg::Proposal { seq, round, .. }) = msg {
                        if self.equivocated_rounds.insert((*seq, *round)) {
                            let (g1, g2) = self.halves();
                            for (group, body) in [(g1, m), (g2, m2)] {
                                for to in group {
                                    out.push(Action::Send {
                                        to,
                                        msg: ProtocolMsg::Ripple(ripple::Msg::Proposal {
                                            seq: *seq,
                                            round: *round,
                                            value: self.pay(body),
                                        }),
                                    });
                                }
                            }
                        }
                    }
                }
            }
            ProtocolConfig::Federated(_) => {
                // Double-endorsing signer.
                if let ReplicaEvent::Message { msg, .. } = ev {
                    if let ProtocolMsg::Federated(federated::Msg::Proposal { block }) = msg {
                        out.push(Action::Broadcast {
                            msg: ProtocolMsg::Federated(federated::Msg::Endorse {
                                height: block.height,
                                block: block.id(),
                            }),
                        });
                    }
                }
            }
            _ => {}
        }
        out
    }
}
