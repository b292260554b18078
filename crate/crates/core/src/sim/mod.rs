//! Deterministic discrete-event simulator with the eventual-synchrony
//! network model and adversary-controlled scheduling.
//!
//! Time is integral logical ticks. Messages are never lost: before GST the
//! scheduler (directed rules, partitions, or seeded jitter) may delay and
//! reorder them arbitrarily within the model's bound, and from GST on every
//! message is delivered within `delta` ticks. A single seeded generator,
//! stream-split per node, is the only source of randomness, so a scenario
//! plus a seed reproduces a run bit-exactly.

pub mod trace;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::adversary::ByzDriver;
use crate::protocols::{
    Action, Ctx, ProtocolMsg, ReplicaEvent, ReplicaState, TimerKind,
};
use crate::rng::RandStream;
use crate::scenario::{RuleAction, Scenario, ScenarioError};
use crate::types::{NodeId, Payload, Tick};
use trace::{EventKind, Trace, TraceEvent};

/// An in-flight point-to-point message. The sender field is stamped by the
/// simulator and doubles as the authentication tag: a node can only ever
/// emit envelopes carrying its own identity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Envelope {
    pub seq: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub msg: ProtocolMsg,
    pub sent_at: Tick,
    pub deadline: Tick,
}

#[derive(Clone, Debug)]
pub(crate) enum Queued {
    Crash { node: NodeId },
    Submit { node: NodeId, payload: Payload },
    Deliver { env: Envelope },
    Timer { node: NodeId, kind: TimerKind, gen: u64 },
}

const CLASS_CRASH: u8 = 0;
const CLASS_SUBMIT: u8 = 1;
const CLASS_DELIVER: u8 = 2;
const CLASS_TIMER: u8 = 3;

#[derive(Clone, Debug)]
pub(crate) enum Role {
    Correct(ReplicaState),
    Byzantine(ByzDriver),
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub role: Role,
    pub crashed: bool,
    pub rand: RandStream,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepResult {
    Event(TraceEvent),
    Quiescent,
}

/// One isolated simulation run. Cloneable: the schedule explorer forks
/// branches by cloning.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub(crate) scenario: Arc<Scenario>,
    pub(crate) now: Tick,
    pub(crate) queue: BTreeMap<(Tick, u8, u64), Queued>,
    pub(crate) seq: u64,
    pub(crate) nodes: Vec<Node>,
    timer_gen: BTreeMap<(NodeId, TimerKind), u64>,
    sched_rng: RandStream,
    pub(crate) trace: Trace,
    pub(crate) record: bool,
    /// In exploration mode delivery times are nominal; an external driver
    /// picks the order and node randomness collapses to range minima.
    pub(crate) explore: bool,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Simulation, ScenarioError> {
        Self::build(scenario, false)
    }

    pub fn new_exploration(scenario: Scenario) -> Result<Simulation, ScenarioError> {
        Self::build(scenario, true)
    }

    fn build(scenario: Scenario, explore: bool) -> Result<Simulation, ScenarioError> {
        scenario.validate()?;
        let n = scenario.n;
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let id = NodeId::from_index(i);
            let rand = if explore {
                RandStream::Fixed
            } else {
                RandStream::for_stream(scenario.seed, i as u64 + 1)
            };
            let role = match scenario.byzantine.get(&id) {
                Some(strategy) => Role::Byzantine(ByzDriver::new(
                    strategy.clone(),
                    id,
                    n,
                    scenario.config.clone(),
                )),
                None => Role::Correct(ReplicaState::new(&scenario.config, id, n)),
            };
            nodes.push(Node {
                role,
                crashed: false,
                rand,
            });
        }
        let sched_rng = if explore {
            RandStream::Fixed
        } else {
            RandStream::for_stream(scenario.seed, 0)
        };
        let mut sim = Simulation {
            scenario: Arc::new(scenario),
            now: Tick(0),
            queue: BTreeMap::new(),
            seq: 0,
            nodes,
            timer_gen: BTreeMap::new(),
            sched_rng,
            trace: Trace::default(),
            record: true,
            explore,
        };
        for (node, at) in sim.scenario.crashes.clone() {
            let key = (at, CLASS_CRASH, sim.next_seq());
            sim.queue.insert(key, Queued::Crash { node });
        }
        for sub in sim.scenario.submissions.clone() {
            let payload = Payload::new(sub.node, sub.body.clone());
            let key = (sub.at, CLASS_SUBMIT, sim.next_seq());
            sim.queue.insert(
                key,
                Queued::Submit {
                    node: sub.node,
                    payload,
                },
            );
        }
        for i in 0..n {
            sim.dispatch(NodeId::from_index(i), &ReplicaEvent::Init);
        }
        Ok(sim)
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// Ledger of a node as its replica sees it (empty for adversarial
    /// nodes).
    pub fn ledger(&self, node: NodeId) -> &[crate::protocols::CommitPayload] {
        match &self.nodes[node.index()].role {
            Role::Correct(r) => r.ledger(),
            Role::Byzantine(_) => &[],
        }
    }

    /// Schedules a client broadcast of `body` at `node` at time `at`.
    pub fn submit_tx(&mut self, node: NodeId, body: &str, at: Tick) -> Result<(), ScenarioError> {
        if !self.scenario.node_exists(node) {
            return Err(ScenarioError::Invalid {
                field: "submit.node".into(),
                msg: format!("unknown node {node}"),
            });
        }
        if at < self.now {
            return Err(ScenarioError::Invalid {
                field: "submit.at".into(),
                msg: format!("submission at {at} is in the past (now {})", self.now),
            });
        }
        let payload = Payload::new(node, body.to_string());
        let key = (at, CLASS_SUBMIT, self.next_seq());
        self.queue.insert(key, Queued::Submit { node, payload });
        Ok(())
    }

    pub fn next_event_time(&self) -> Option<Tick> {
        self.queue.keys().next().map(|(t, _, _)| *t)
    }

    /// Whether a queued timer entry is still current (not superseded by a
    /// later re-arm).
    pub(crate) fn timer_live(&self, node: NodeId, kind: TimerKind, gen: u64) -> bool {
        self.timer_gen.get(&(node, kind)) == Some(&gen)
    }

    /// Pops and applies the next event. `Quiescent` means no pending
    /// envelopes, timers or submissions remain.
    pub fn step(&mut self) -> StepResult {
        loop {
            let Some((&key, _)) = self.queue.iter().next() else {
                return StepResult::Quiescent;
            };
            let item = self.queue.remove(&key).expect("key just observed");
            self.now = self.now.max(key.0);
            if let Some(ev) = self.apply_queued(item) {
                return StepResult::Event(ev);
            }
        }
    }

    /// Runs until quiescence or until the next event would pass the
    /// scenario horizon.
    pub fn run(&mut self) -> &Trace {
        let horizon = self.scenario.horizon;
        loop {
            match self.next_event_time() {
                None => break,
                Some(t) if t > horizon => break,
                Some(_) => {
                    if self.step() == StepResult::Quiescent {
                        break;
                    }
                }
            }
        }
        &self.trace
    }

    pub(crate) fn apply_queued(&mut self, item: Queued) -> Option<TraceEvent> {
        match item {
            Queued::Crash { node } => {
                self.nodes[node.index()].crashed = true;
                Some(self.record(node, EventKind::Crash))
            }
            Queued::Submit { node, payload } => {
                if self.nodes[node.index()].crashed {
                    return None;
                }
                let ev = self.record(
                    node,
                    EventKind::Submit {
                        payload: payload.clone(),
                    },
                );
                self.dispatch(node, &ReplicaEvent::Submit(payload));
                Some(ev)
            }
            Queued::Deliver { env } => {
                if self.nodes[env.to.index()].crashed {
                    return None;
                }
                let ev = self.record(
                    env.to,
                    EventKind::Deliver {
                        from: env.from,
                        env: env.seq,
                        msg: env.msg.clone(),
                    },
                );
                self.dispatch(
                    env.to,
                    &ReplicaEvent::Message {
                        from: env.from,
                        msg: env.msg,
                    },
                );
                Some(ev)
            }
            Queued::Timer { node, kind, gen } => {
                if self.nodes[node.index()].crashed {
                    return None;
                }
                if self.timer_gen.get(&(node, kind)) != Some(&gen) {
                    return None; // superseded
                }
                let ev = self.record(node, EventKind::TimerFire { kind });
                self.dispatch(node, &ReplicaEvent::Timer(kind));
                Some(ev)
            }
        }
    }

    pub(crate) fn dispatch(&mut self, node: NodeId, ev: &ReplicaEvent) {
        let mut rand = std::mem::replace(&mut self.nodes[node.index()].rand, RandStream::Fixed);
        let mut ctx = Ctx {
            now: self.now,
            rand: &mut rand,
        };
        let explore = self.explore;
        let actions = match &mut self.nodes[node.index()].role {
            Role::Correct(r) => r.handle(ev, &mut ctx),
            Role::Byzantine(d) => {
                if explore {
                    // Adversarial behavior belongs to the explorer's
                    // templates; the scripted strategy stays out of it.
                    d.observe_only(ev);
                    Vec::new()
                } else {
                    d.handle(ev, &mut ctx)
                }
            }
        };
        self.nodes[node.index()].rand = rand;
        self.apply_actions(node, actions);
    }

    pub(crate) fn apply_actions(&mut self, node: NodeId, actions: Vec<Action>) {
        for act in actions {
            match act {
                Action::Send { to, msg } => self.send(node, to, msg),
                Action::Broadcast { msg } => {
                    for i in 0..self.scenario.n {
                        let to = NodeId::from_index(i);
                        if to != node {
                            self.send(node, to, msg.clone());
                        }
                    }
                }
                Action::SetTimer { kind, after } => {
                    let gen = self.timer_gen.entry((node, kind)).or_insert(0);
                    *gen += 1;
                    let gen = *gen;
                    let key = (self.now + after, CLASS_TIMER, self.next_seq());
                    self.queue.insert(key, Queued::Timer { node, kind, gen });
                }
                Action::Commit { index, payload } => {
                    self.record(node, EventKind::Commit { index, payload });
                }
                Action::EnterView { view } => {
                    self.record(node, EventKind::ViewChange { view });
                }
                Action::Flag { note } => {
                    self.record(node, EventKind::Flag { note });
                }
            }
        }
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: ProtocolMsg) {
        let sent_at = self.now;
        let deadline = sent_at.max(self.scenario.net.gst) + self.scenario.net.delta;
        let seq = self.next_seq();
        let env = Envelope {
            seq,
            from,
            to,
            msg: msg.clone(),
            sent_at,
            deadline,
        };
        self.record(from, EventKind::Send { to, env: seq, msg });
        let at = if self.explore {
            sent_at + 1
        } else {
            self.delivery_time(&env)
        };
        self.queue.insert((at, CLASS_DELIVER, seq), Queued::Deliver { env });
    }

    /// Assigns the delivery tick: first matching directed rule, else seeded
    /// jitter, always within the eventual-synchrony bound; partitions defer
    /// delivery past their window (the bound does not apply across a
    /// partition, the pair not being connected).
    fn delivery_time(&mut self, env: &Envelope) -> Tick {
        let net = &self.scenario.net;
        let sent = env.sent_at;
        let earliest = sent + net.min_delay;
        let rule = self
            .scenario
            .rules
            .iter()
            .find(|r| r.matches(env.from, env.to, sent));
        let mut at = match rule {
            Some(r) => match r.action {
                RuleAction::HoldUntil(t) => t.max(earliest).min(env.deadline),
                RuleAction::Delay(d) => (sent + d.max(1)).min(env.deadline),
            },
            None => {
                if sent >= net.gst || !net.pre_async {
                    sent + self.sched_rng.range(net.min_delay, net.delta)
                } else {
                    let span = env.deadline.0 - sent.0;
                    sent + self.sched_rng.range(net.min_delay, span)
                }
            }
        };
        loop {
            let blocking = self
                .scenario
                .partitions
                .iter()
                .find(|p| p.separates(env.from, env.to, at));
            match blocking {
                Some(p) => at = p.end,
                None => break,
            }
        }
        at
    }

    fn record(&mut self, node: NodeId, kind: EventKind) -> TraceEvent {
        let ev = TraceEvent {
            time: self.now,
            node,
            kind,
        };
        if self.record {
            self.trace.push(ev.clone());
        }
        ev
    }

    /// Correct nodes that have not crashed: the set properties quantify
    /// over.
    pub fn correct_nodes(&self) -> Vec<NodeId> {
        self.scenario.correct_set()
    }
}
