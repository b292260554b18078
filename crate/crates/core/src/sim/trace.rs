//! The trace: a time-sorted log of everything that happened in a run. All
//! property checkers consume traces, never live simulator state.
//!
//! Export format is line-delimited, one event per line, tab-separated
//! `time, kind, node, details`, bit-exact across runs with equal seeds.

use std::fmt;

use crate::protocols::{CommitPayload, ProtocolMsg, TimerKind};
use crate::types::{NodeId, Payload, Tick};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    Submit { payload: Payload },
    Send { to: NodeId, env: u64, msg: ProtocolMsg },
    Deliver { from: NodeId, env: u64, msg: ProtocolMsg },
    Commit { index: u64, payload: CommitPayload },
    Crash,
    TimerFire { kind: TimerKind },
    ViewChange { view: u64 },
    Flag { note: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: Tick,
    pub node: NodeId,
    pub kind: EventKind,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EventKind::Submit { payload } => {
                write!(f, "{}\tsubmit\t{}\tpayload={payload}", self.time, self.node)
            }
            EventKind::Send { to, env, msg } => write!(
                f,
                "{}\tsend\t{}\tto={to} env={env} msg={msg}",
                self.time, self.node
            ),
            EventKind::Deliver { from, env, msg } => write!(
                f,
                "{}\tdeliver\t{}\tfrom={from} env={env} msg={msg}",
                self.time, self.node
            ),
            EventKind::Commit { index, payload } => write!(
                f,
                "{}\tcommit\t{}\tindex={index} payload={payload}",
                self.time, self.node
            ),
            EventKind::Crash => write!(f, "{}\tcrash\t{}\t-", self.time, self.node),
            EventKind::TimerFire { kind } => {
                write!(f, "{}\ttimer\t{}\tkind={kind}", self.time, self.node)
            }
            EventKind::ViewChange { view } => {
                write!(f, "{}\tview\t{}\tview={view}", self.time, self.node)
            }
            EventKind::Flag { note } => {
                write!(f, "{}\tflag\t{}\t{note}", self.time, self.node)
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, ev: TraceEvent) {
        self.events.push(ev);
    }

    /// Canonical text export; identical scenarios and seeds yield identical
    /// bytes.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for ev in &self.events {
            s.push_str(&ev.to_string());
            s.push('\n');
        }
        s
    }

    pub fn commits_of(&self, node: NodeId) -> impl Iterator<Item = (&TraceEvent, &CommitPayload)> {
        self.events.iter().filter_map(move |ev| match &ev.kind {
            EventKind::Commit { payload, .. } if ev.node == node => Some((ev, payload)),
            _ => None,
        })
    }

    pub fn submissions(&self) -> impl Iterator<Item = (&TraceEvent, &Payload)> {
        self.events.iter().filter_map(|ev| match &ev.kind {
            EventKind::Submit { payload } => Some((ev, payload)),
            _ => None,
        })
    }

    pub fn last_time(&self) -> Tick {
        self.events.last().map(|e| e.time).unwrap_or(Tick(0))
    }

    /// Structural sanity: time-sorted, every delivery matches an earlier
    /// send of the same envelope (same endpoints, same message), and no
    /// event is attributed to a node after its crash.
    pub fn validate_structure(&self) -> Result<(), String> {
        let mut last = Tick(0);
        let mut sends: std::collections::BTreeMap<u64, (NodeId, NodeId, &ProtocolMsg, Tick)> =
            std::collections::BTreeMap::new();
        let mut crashed: std::collections::BTreeMap<NodeId, Tick> =
            std::collections::BTreeMap::new();
        for ev in &self.events {
            if ev.time < last {
                return Err(format!("time went backwards at `{ev}`"));
            }
            last = ev.time;
            if let Some(t) = crashed.get(&ev.node) {
                if ev.time > *t || !matches!(ev.kind, EventKind::Crash) {
                    return Err(format!("event from crashed node: `{ev}`"));
                }
            }
            match &ev.kind {
                EventKind::Send { to, env, msg } => {
                    sends.insert(*env, (ev.node, *to, msg, ev.time));
                }
                EventKind::Deliver { from, env, msg } => match sends.get(env) {
                    None => return Err(format!("delivery without send: `{ev}`")),
                    Some((sfrom, sto, smsg, stime)) => {
                        if sfrom != from || *sto != ev.node || *smsg != msg || *stime > ev.time {
                            return Err(format!("delivery does not match its send: `{ev}`"));
                        }
                    }
                },
                EventKind::Crash => {
                    crashed.insert(ev.node, ev.time);
                }
                _ => {}
            }
        }
        Ok(())
    }
}
