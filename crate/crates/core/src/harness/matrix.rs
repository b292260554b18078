//! Fault-grid sweeps aggregated into the resilience matrix: one row per
//! protocol, columns for special-node crash, generic crashes, special-node
//! subversion and generic subversion, with the legend used throughout the
//! comparison tables: `✓` resilient, `−` not resilient (at least one
//! witnessed failure), `·` no such special node, `(✓)` crash of nodes other
//! than the special one, `⊗` tolerates one of the default validators, `?`
//! not assessed.
//!
//! Every non-`·` cell is backed by runs: a `✓`-class cell must have zero
//! failing verdicts across its grid, and every `−` cell carries at least
//! one witnessed failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::adversary::{scenarios, Strategy};
use crate::protocols::{ProtocolConfig, ProtocolId};
use crate::scenario::Scenario;
use crate::types::{NodeId, Tick};

use super::run_scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    SpecialCrash,
    AnyCrash,
    SpecialSubverted,
    AnySubverted,
}

impl Column {
    pub fn all() -> [Column; 4] {
        [
            Column::SpecialCrash,
            Column::AnyCrash,
            Column::SpecialSubverted,
            Column::AnySubverted,
        ]
    }

    pub fn label(&self) -> &'static str {
        match self {
            Column::SpecialCrash => "special-crash",
            Column::AnyCrash => "any-crash",
            Column::SpecialSubverted => "special-subverted",
            Column::AnySubverted => "any-subverted",
        }
    }
}

/// Glyph rendered when the cell's grid has zero failures; cells with
/// failures render `−`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassGlyph {
    Check,
    CheckParen,
    CircledCross,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cell {
    pub glyph: String,
    pub runs: usize,
    pub failures: usize,
    pub witness: Option<String>,
}

impl Cell {
    fn absent() -> Cell {
        Cell {
            glyph: "·".into(),
            runs: 0,
            failures: 0,
            witness: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MatrixRow {
    pub protocol: ProtocolId,
    pub cells: BTreeMap<&'static str, Cell>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ResilienceMatrix {
    pub rows: Vec<MatrixRow>,
}

#[derive(Clone, Copy, Debug)]
pub struct SweepConfig {
    pub n_from: usize,
    pub n_to: usize,
    pub seeds: u64,
}

impl Default for SweepConfig {
    fn default() -> SweepConfig {
        SweepConfig {
            n_from: 4,
            n_to: 7,
            seeds: 25,
        }
    }
}

/// The protocols with a row in the matrix.
pub fn matrix_protocols() -> Vec<ProtocolId> {
    vec![
        ProtocolId::RaftLite,
        ProtocolId::PbftLite,
        ProtocolId::TangaroaLite,
        ProtocolId::Federated,
        ProtocolId::QuorumChain,
        ProtocolId::MultiChain,
        ProtocolId::RippleRounds,
    ]
}

pub fn sweep_all(cfg: &SweepConfig) -> ResilienceMatrix {
    let rows = matrix_protocols()
        .into_par_iter()
        .map(|p| sweep_protocol(p, cfg))
        .collect();
    ResilienceMatrix { rows }
}

pub fn sweep_protocol(protocol: ProtocolId, cfg: &SweepConfig) -> MatrixRow {
    let mut cells = BTreeMap::new();
    let mut notes = Vec::new();
    for col in Column::all() {
        let (grid, ok_glyph) = cell_grid(protocol, col, cfg);
        let cell = match grid {
            None => Cell::absent(),
            Some(scenarios) => run_cell(&scenarios, ok_glyph),
        };
        cells.insert(col.label(), cell);
    }
    match protocol {
        ProtocolId::QuorumChain => {
            let fork = scenarios::quorumchain_two_maker_fork_scenario();
            let out = run_scenario(&fork).expect("packaged scenario runs");
            if out.any_failed() {
                notes.push(format!(
                    "all-honest two-maker fork witnessed by `{}`",
                    fork.name
                ));
            } else {
                notes.push("all-honest two-maker fork NOT reproduced".into());
            }
        }
        ProtocolId::MultiChain => {
            notes.push("commits are non-final; the safety cell checks common prefix".into());
        }
        ProtocolId::RippleRounds => {
            let fork = scenarios::ripple_two_cliques_scenario();
            let out = run_scenario(&fork).expect("packaged scenario runs");
            if out.any_failed() {
                notes.push(format!(
                    "fork below the overlap bound witnessed by `{}`",
                    fork.name
                ));
            } else {
                notes.push("overlap fork NOT reproduced".into());
            }
        }
        _ => {}
    }
    MatrixRow {
        protocol,
        cells,
        notes,
    }
}

fn run_cell(scenarios: &[Scenario], ok: PassGlyph) -> Cell {
    let results: Vec<(String, bool)> = scenarios
        .par_iter()
        .map(|s| {
            let out = run_scenario(s).expect("sweep scenario must validate");
            (s.name.clone(), out.any_failed())
        })
        .collect();
    let failures = results.iter().filter(|(_, failed)| *failed).count();
    let witness = results
        .iter()
        .find(|(_, failed)| *failed)
        .map(|(name, _)| name.clone());
    let glyph = if failures == 0 {
        match ok {
            PassGlyph::Check => "✓".to_string(),
            PassGlyph::CheckParen => "(✓)".to_string(),
            PassGlyph::CircledCross => "⊗".to_string(),
        }
    } else {
        "−".to_string()
    };
    Cell {
        glyph,
        runs: results.len(),
        failures,
        witness,
    }
}

/// The scenario grid backing one cell, or `None` when the protocol has no
/// such special node.
fn cell_grid(
    protocol: ProtocolId,
    col: Column,
    cfg: &SweepConfig,
) -> (Option<Vec<Scenario>>, PassGlyph) {
    use Column::*;
    use ProtocolId::*;
    let ns = || cfg.n_from..=cfg.n_to;
    let seeds = || 0..cfg.seeds;
    let mut out: Vec<Scenario> = Vec::new();
    match (protocol, col) {
        // ------------------------------------------------------ raft_lite
        (RaftLite, SpecialCrash | SpecialSubverted) => return (None, PassGlyph::Check),
        (RaftLite, AnyCrash) => {
            for n in ns() {
                for t in 0..=(n - 1) / 2 {
                    for seed in seeds() {
                        out.push(crash_scenario(protocol, n, t, seed, &[]));
                    }
                }
            }
            (Some(out), PassGlyph::Check)
        }
        (RaftLite, AnySubverted) => {
            for n in ns() {
                for seed in seeds() {
                    out.push(byz_scenario(protocol, n, 1, seed));
                }
            }
            (Some(out), PassGlyph::Check)
        }

        // ------------------------------------------------------ pbft_lite
        (PbftLite, SpecialCrash | SpecialSubverted) => return (None, PassGlyph::Check),
        (PbftLite, AnyCrash) => {
            for n in ns() {
                for t in 0..=(n - 1) / 3 {
                    for seed in seeds() {
                        out.push(crash_scenario(protocol, n, t, seed, &[]));
                    }
                }
            }
            (Some(out), PassGlyph::Check)
        }
        (PbftLite, AnySubverted) => {
            for n in ns() {
                for seed in seeds() {
                    let f = (n - 1) / 3;
                    out.push(byz_scenario(protocol, n, f, seed));
                }
            }
            (Some(out), PassGlyph::Check)
        }

        // -------------------------------------------------- tangaroa_lite
        (TangaroaLite, SpecialCrash | SpecialSubverted) => return (None, PassGlyph::Check),
        (TangaroaLite, AnyCrash) => {
            for n in ns() {
                for t in 0..=(n - 1) / 3 {
                    for seed in seeds() {
                        out.push(crash_scenario(protocol, n, t, seed, &[]));
                    }
                }
            }
            (Some(out), PassGlyph::Check)
        }
        (TangaroaLite, AnySubverted) => {
            out.push(scenarios::leader_equivocation_scenario(TangaroaLite));
            out.push(scenarios::rushing_scenario(TangaroaLite));
            (Some(out), PassGlyph::Check)
        }

        // -------------------------------------------------------- federated
        (Federated, SpecialCrash) => {
            for n in ns() {
                for seed in seeds() {
                    let mut s = base_scenario(protocol, n, seed);
                    s.crashes.insert(NodeId(0), Tick(12));
                    s.name = format!("{}-gen-crash", s.name);
                    out.push(s);
                }
            }
            (Some(out), PassGlyph::Check)
        }
        (Federated, AnyCrash) => {
            for n in ns() {
                for t in 0..=(n - 1) / 3 {
                    for seed in seeds() {
                        out.push(crash_scenario(protocol, n, t, seed, &[NodeId(0)]));
                    }
                }
            }
            (Some(out), PassGlyph::CheckParen)
        }
        (Federated, SpecialSubverted) => {
            for n in ns() {
                for seed in seeds() {
                    let mut s = base_scenario(protocol, n, seed);
                    s.byzantine.insert(
                        NodeId(0),
                        Strategy::ForkingGenerator {
                            m: "m".into(),
                            m2: "m2".into(),
                        },
                    );
                    s.name = format!("{}-gen-subverted", s.name);
                    out.push(s);
                }
            }
            (Some(out), PassGlyph::Check)
        }
        (Federated, AnySubverted) => {
            for n in ns() {
                out.push(federated_fork_scenario(n));
            }
            (Some(out), PassGlyph::Check)
        }

        // ------------------------------------------------------ quorumchain
        (QuorumChain, SpecialCrash) => {
            for n in ns() {
                for seed in seeds() {
                    let mut s = base_scenario(protocol, n, seed);
                    s.crashes.insert(NodeId(0), Tick(10));
                    s.name = format!("{}-maker-crash", s.name);
                    out.push(s);
                }
            }
            (Some(out), PassGlyph::Check)
        }
        (QuorumChain, AnyCrash) => {
            for n in ns() {
                for t in 0..=(n - 1) / 2 {
                    for seed in seeds() {
                        out.push(crash_scenario(protocol, n, t, seed, &[NodeId(0)]));
                    }
                }
            }
            (Some(out), PassGlyph::CheckParen)
        }
        (QuorumChain, SpecialSubverted | AnySubverted) => {
            for n in ns() {
                for seed in seeds().take(5) {
                    let mut s = base_scenario(protocol, n, seed);
                    s.byzantine.insert(
                        NodeId(0),
                        Strategy::ConflictingProposer {
                            m: "m".into(),
                            m2: "m2".into(),
                        },
                    );
                    s.name = format!("{}-maker-subverted", s.name);
                    out.push(s);
                }
            }
            (Some(out), PassGlyph::Check)
        }

        // ------------------------------------------------------- multichain
        (MultiChain, SpecialCrash | SpecialSubverted) => return (None, PassGlyph::Check),
        (MultiChain, AnyCrash) => {
            for n in ns() {
                for t in 0..=(n - 1) / 2 {
                    for seed in seeds() {
                        out.push(crash_scenario(protocol, n, t, seed, &[]));
                    }
                }
            }
            (Some(out), PassGlyph::Check)
        }
        (MultiChain, AnySubverted) => {
            out.push(scenarios::multichain_takeover_scenario());
            (Some(out), PassGlyph::Check)
        }

        // ---------------------------------------------------- ripple_rounds
        (RippleRounds, SpecialCrash) => {
            for seed in seeds() {
                let mut s = base_scenario(protocol, 5, seed);
                s.crashes.insert(NodeId(4), Tick(10));
                s.name = format!("{}-one-of-five-crash", s.name);
                out.push(s);
            }
            (Some(out), PassGlyph::CircledCross)
        }
        (RippleRounds, AnyCrash) => {
            for n in ns() {
                for t in 0..=(n - 1) / 2 {
                    for seed in seeds() {
                        out.push(crash_scenario(protocol, n, t, seed, &[]));
                    }
                }
            }
            (Some(out), PassGlyph::CheckParen)
        }
        (RippleRounds, SpecialSubverted) => {
            for seed in seeds() {
                let mut s = base_scenario(protocol, 5, seed);
                s.byzantine.insert(
                    NodeId(4),
                    Strategy::ConflictingProposer {
                        m: "m".into(),
                        m2: "m2".into(),
                    },
                );
                s.name = format!("{}-one-of-five-subverted", s.name);
                out.push(s);
            }
            (Some(out), PassGlyph::CircledCross)
        }
        (RippleRounds, AnySubverted) => {
            for n in ns() {
                for seed in seeds().take(5) {
                    let f = usize::max(1, n.div_ceil(3));
                    let mut s = base_scenario(protocol, n, seed);
                    // Fork-freedom is the claim under test here; liveness
                    // legitimately degrades beyond the n/5 tolerance.
                    s.checks.liveness = Some(120);
                    for b in 0..f {
                        s.byzantine.insert(
                            NodeId((n - 1 - b) as u8),
                            Strategy::ConflictingProposer {
                                m: "m".into(),
                                m2: "m2".into(),
                            },
                        );
                    }
                    s.name = format!("{}-f{}-subverted", s.name, f);
                    out.push(s);
                }
            }
            (Some(out), PassGlyph::Check)
        }

        _ => (None, PassGlyph::Check),
    }
}

/// Fault-free baseline with staggered submissions from correct nodes.
fn base_scenario(protocol: ProtocolId, n: usize, seed: u64) -> Scenario {
    let mut s = Scenario::new(protocol, n, seed);
    s.horizon = Tick(400);
    s.net.delta = 2;
    s.net.min_delay = 1;
    s.checks.liveness = Some(100);
    if let ProtocolConfig::Mc(c) = &mut s.config {
        c.rho_pct = 25;
        c.mine_delay = (6, 14);
    }
    s
}

/// Adds `count` staggered submissions from nodes that stay correct.
fn with_submissions(mut s: Scenario, count: u64) -> Scenario {
    let correct = s.correct_set();
    assert!(!correct.is_empty(), "no correct node left to submit at");
    let gap = if s.protocol == ProtocolId::RippleRounds {
        60
    } else {
        8
    };
    for i in 0..count {
        let node = correct[(i as usize) % correct.len()];
        s = s.submit(2 + gap * i, node, &format!("tx-{i}"));
    }
    s
}

/// `t` crashes among the non-excluded nodes, crash set rotated by seed.
fn crash_scenario(
    protocol: ProtocolId,
    n: usize,
    t: usize,
    seed: u64,
    exclude: &[NodeId],
) -> Scenario {
    let mut s = base_scenario(protocol, n, seed);
    let candidates: Vec<NodeId> = (0..n)
        .map(NodeId::from_index)
        .filter(|id| !exclude.contains(id))
        .collect();
    for j in 0..t {
        let pick = candidates[(seed as usize + j * 2) % candidates.len()];
        // Collisions shift to the next free candidate.
        let mut k = 0;
        let mut node = pick;
        while s.crashes.contains_key(&node) {
            k += 1;
            node = candidates[(seed as usize + j * 2 + k) % candidates.len()];
        }
        s.crashes.insert(node, Tick(10 + 9 * j as u64));
    }
    s.name = format!("{}-n{}-t{}-s{}", protocol, n, t, seed);
    with_submissions(s, 3)
}

/// `f` adversarial nodes; the first one leads the starting view where the
/// protocol has a leader, so the equivocation script actually bites.
fn byz_scenario(protocol: ProtocolId, n: usize, f: usize, seed: u64) -> Scenario {
    let mut s = base_scenario(protocol, n, seed);
    let mut byz: Vec<NodeId> = Vec::new();
    for j in 0..f {
        let node = NodeId(((seed as usize + j * 3) % n) as u8);
        let node = (0..n)
            .map(|k| NodeId(((node.index() + k) % n) as u8))
            .find(|id| !byz.contains(id))
            .expect("fewer byzantine nodes than nodes");
        byz.push(node);
    }
    for (i, node) in byz.iter().enumerate() {
        let strategy = match (i, seed % 2) {
            (0, 0) => Strategy::EquivocatingLeader {
                m: "m".into(),
                m2: "m2".into(),
            },
            (0, _) => Strategy::RushingSilentLeader,
            _ => Strategy::Passive,
        };
        s.byzantine.insert(*node, strategy);
    }
    if let ProtocolConfig::Pbft(c) = &mut s.config {
        c.initial_view = byz[0].index() as u64;
    }
    if let ProtocolConfig::Tangaroa(c) = &mut s.config {
        c.initial_leader = Some(byz[0]);
    }
    s.name = format!("{}-n{}-f{}-s{}", protocol, n, f, seed);
    with_submissions(s, 3)
}

/// Generator plus `f` colluding double-signers: the certified fork.
pub fn federated_fork_scenario(n: usize) -> Scenario {
    let f = (n - 1) / 3;
    let mut s = base_scenario(ProtocolId::Federated, n, 1);
    s.byzantine.insert(
        NodeId(0),
        Strategy::ForkingGenerator {
            m: "m".into(),
            m2: "m2".into(),
        },
    );
    for j in 0..f {
        s.byzantine.insert(
            NodeId((1 + j) as u8),
            Strategy::ForkingGenerator {
                m: "m".into(),
                m2: "m2".into(),
            },
        );
    }
    s.checks.liveness = None;
    s.name = format!("federated-fork-n{n}");
    s
}

impl ResilienceMatrix {
    /// Aligned text table in the legend of the comparison tables.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16}{:<16}{:<12}{:<20}{}",
            "protocol", "special-crash", "any-crash", "special-subverted", "any-subverted"
        );
        for row in &self.rows {
            let cell = |c: &str| row.cells.get(c).map(|x| x.glyph.clone()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:<16}{:<16}{:<12}{:<20}{}",
                row.protocol.to_string(),
                cell("special-crash"),
                cell("any-crash"),
                cell("special-subverted"),
                cell("any-subverted"),
            );
        }
        for row in &self.rows {
            for note in &row.notes {
                let _ = writeln!(out, "note [{}]: {note}", row.protocol);
            }
        }
        out
    }

    /// Machine-readable records: one line per cell, tab-separated.
    pub fn records(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            for col in Column::all() {
                let c = &row.cells[col.label()];
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    row.protocol,
                    col.label(),
                    c.glyph,
                    c.runs,
                    c.failures,
                    c.witness.clone().unwrap_or_else(|| "-".into())
                );
            }
        }
        out
    }

    pub fn row(&self, protocol: ProtocolId) -> Option<&MatrixRow> {
        self.rows.iter().find(|r| r.protocol == protocol)
    }
}
