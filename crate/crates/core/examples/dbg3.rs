use quorumlab::adversary::explore::{explore, Bounds, Target};
use quorumlab::adversary::scenarios;
use quorumlab::protocols::ProtocolId;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap();
    let depth: u32 = std::env::args().nth(2).unwrap().parse().unwrap();
    let emissions: u32 = std::env::args().nth(3).unwrap().parse().unwrap();
    let (s, target) = match which.as_str() {
        "brb" => (scenarios::explore_bcast_scenario(ProtocolId::Brb), Target::ConsistencyAndTotality),
        "bcb" => (scenarios::explore_bcast_scenario(ProtocolId::Bcb), Target::ConflictingCommits),
        "pbft" => (scenarios::explore_split_commit_scenario(ProtocolId::PbftLite), Target::ConflictingCommits),
        "tang" => (scenarios::explore_split_commit_scenario(ProtocolId::TangaroaLite), Target::ConflictingCommits),
        _ => panic!(),
    };
    let t0 = Instant::now();
    let b = Bounds { depth, max_emissions: emissions, max_states: 100_000_000, ..Bounds::default() };
    let out = explore(&s, b, target);
    println!("{which} d={depth} e={emissions}: {} in {:?}", out.summary(), t0.elapsed());
}
