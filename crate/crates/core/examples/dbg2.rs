use quorumlab::adversary::explore::{explore, Bounds, Target};
use quorumlab::adversary::scenarios;
use quorumlab::protocols::ProtocolId;
use std::time::Instant;

fn main() {
    let depth: u32 = std::env::args().nth(1).unwrap().parse().unwrap();
    let emissions: u32 = std::env::args().nth(2).unwrap().parse().unwrap();
    let s = scenarios::explore_split_commit_scenario(ProtocolId::TangaroaLite);
    let t0 = Instant::now();
    let b = Bounds { depth, max_emissions: emissions, max_states: 50_000_000, ..Bounds::default() };
    let out = explore(&s, b, Target::ConflictingCommits);
    println!("tangaroa d={depth} e={emissions}: {} in {:?}", out.summary(), t0.elapsed());
}
