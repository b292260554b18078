//! CLI verbs: `run <file>`, `sweep`, `explore <file>`, `check-quorum
//! <file>`, plus `builtin` to materialize the packaged counterexample
//! scenarios. Exit status: 0 all checks passed, 2 a property failed, 1
//! usage or file errors. Worker count honors `QUORUMLAB_WORKERS`.

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::adversary::explore::{explore, Bounds, ExploreOutcome, Target};
use crate::adversary::scenarios;
use crate::harness::{matrix, quorum_file, run_scenario};
use crate::protocols::ProtocolId;
use crate::scenario::Scenario;

#[derive(Parser)]
#[command(name = "quorumlab", version, about = "Consensus resilience laboratory")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file: simulate to the horizon, write the trace and
    /// verdicts, exit 2 on property failure.
    Run {
        file: PathBuf,
        /// Write the trace here (line-delimited, tab-separated).
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Write verdicts plus witnesses here.
        #[arg(long)]
        verdicts_out: Option<PathBuf>,
    },
    /// Sweep the fault grid and print the resilience matrix.
    Sweep {
        /// Protocol to sweep, or `all`.
        #[arg(default_value = "all")]
        protocol: String,
        /// Node counts, e.g. `4..7` (inclusive).
        #[arg(long, default_value = "4..7")]
        n: String,
        /// Seeds per grid point.
        #[arg(long, default_value_t = 25)]
        seeds: u64,
        /// Write machine-readable cell records here.
        #[arg(long)]
        records_out: Option<PathBuf>,
    },
    /// Exhaustively explore schedules of a scenario file.
    Explore {
        file: PathBuf,
        /// Depth bound: deliveries plus timer fires.
        #[arg(long, default_value_t = 20)]
        depth: u32,
        /// Adversarial emission budget.
        #[arg(long, default_value_t = 8)]
        emissions: u32,
        /// Hunt a terminal partial delivery instead of conflicting commits.
        #[arg(long)]
        partial: bool,
        /// Write the witness trace here when one is found.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Check a quorum-structure file.
    CheckQuorum { file: PathBuf },
    /// Print a packaged scenario to stdout (`list` to enumerate).
    Builtin { name: String },
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    init_workers();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn init_workers() {
    if let Ok(w) = std::env::var("QUORUMLAB_WORKERS") {
        if let Ok(n) = w.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn load_scenario(path: &PathBuf) -> Result<Scenario, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Scenario::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<i32, String> {
    match cli.command {
        Command::Run {
            file,
            trace_out,
            verdicts_out,
        } => {
            let scenario = load_scenario(&file)?;
            let out = run_scenario(&scenario).map_err(|e| e.to_string())?;
            if let Some(p) = trace_out {
                fs::write(&p, out.trace.render()).map_err(|e| e.to_string())?;
            }
            let mut report = String::new();
            for v in &out.verdicts {
                report.push_str(&v.render());
            }
            print!("{report}");
            if let Some(p) = verdicts_out {
                fs::write(&p, report).map_err(|e| e.to_string())?;
            }
            Ok(if out.any_failed() { 2 } else { 0 })
        }
        Command::Sweep {
            protocol,
            n,
            seeds,
            records_out,
        } => {
            let (n_from, n_to) = n
                .split_once("..")
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| format!("bad n range `{n}`"))?;
            let cfg = matrix::SweepConfig {
                n_from,
                n_to,
                seeds,
            };
            let m = if protocol == "all" {
                matrix::sweep_all(&cfg)
            } else {
                let p = ProtocolId::parse(&protocol)
                    .ok_or_else(|| format!("unknown protocol `{protocol}`"))?;
                matrix::ResilienceMatrix {
                    rows: vec![matrix::sweep_protocol(p, &cfg)],
                }
            };
            print!("{}", m.render());
            if let Some(p) = records_out {
                fs::write(&p, m.records()).map_err(|e| e.to_string())?;
            }
            Ok(0)
        }
        Command::Explore {
            file,
            depth,
            emissions,
            partial,
            trace_out,
        } => {
            let scenario = load_scenario(&file)?;
            let bounds = Bounds {
                depth,
                max_emissions: emissions,
                ..Bounds::default()
            };
            let target = if partial {
                Target::TerminalPartialDelivery
            } else {
                Target::ConflictingCommits
            };
            let outcome = explore(&scenario, bounds, target);
            println!("{}", outcome.summary());
            if let ExploreOutcome::Witness { trace, .. } = &outcome {
                if let Some(p) = trace_out {
                    fs::write(&p, trace.render()).map_err(|e| e.to_string())?;
                }
            }
            Ok(match outcome {
                ExploreOutcome::Witness { .. } => 2,
                ExploreOutcome::Clean { .. } => 0,
                ExploreOutcome::OutOfBudget { .. } => 1,
            })
        }
        Command::CheckQuorum { file } => {
            let text =
                fs::read_to_string(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            let parsed = quorum_file::parse(&text).map_err(|e| e.to_string())?;
            let (lines, ok) = quorum_file::analyze(&parsed);
            for l in lines {
                println!("{l}");
            }
            Ok(if ok { 0 } else { 2 })
        }
        Command::Builtin { name } => {
            let builtin: Vec<(&str, Scenario)> = vec![
                (
                    "leader-equivocation-tangaroa",
                    scenarios::leader_equivocation_scenario(ProtocolId::TangaroaLite),
                ),
                (
                    "leader-equivocation-pbft",
                    scenarios::leader_equivocation_scenario(ProtocolId::PbftLite),
                ),
                (
                    "leader-crash-raft",
                    scenarios::leader_equivocation_scenario(ProtocolId::RaftLite),
                ),
                (
                    "rushing-leader-tangaroa",
                    scenarios::rushing_scenario(ProtocolId::TangaroaLite),
                ),
                (
                    "rushing-leader-pbft",
                    scenarios::rushing_scenario(ProtocolId::PbftLite),
                ),
                (
                    "quorumchain-two-maker-fork",
                    scenarios::quorumchain_two_maker_fork_scenario(),
                ),
                (
                    "multichain-takeover",
                    scenarios::multichain_takeover_scenario(),
                ),
                (
                    "ripple-two-cliques",
                    scenarios::ripple_two_cliques_scenario(),
                ),
                (
                    "explore-split-commit-tangaroa",
                    scenarios::explore_split_commit_scenario(ProtocolId::TangaroaLite),
                ),
                (
                    "explore-split-commit-pbft",
                    scenarios::explore_split_commit_scenario(ProtocolId::PbftLite),
                ),
                (
                    "explore-bcb",
                    scenarios::explore_bcast_scenario(ProtocolId::Bcb),
                ),
                (
                    "explore-brb",
                    scenarios::explore_bcast_scenario(ProtocolId::Brb),
                ),
            ];
            if name == "list" {
                for (n, _) in &builtin {
                    println!("{n}");
                }
                return Ok(0);
            }
            match builtin.into_iter().find(|(n, _)| *n == name) {
                Some((_, s)) => {
                    print!("{}", s.canonical());
                    Ok(0)
                }
                None => Err(format!("unknown builtin `{name}` (try `builtin list`)")),
            }
        }
    }
}
