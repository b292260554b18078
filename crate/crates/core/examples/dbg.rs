use quorumlab::adversary::explore::{explore, Bounds, Target};
use quorumlab::adversary::scenarios;
use quorumlab::protocols::ProtocolId;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "tangaroa".into());
    let t0 = Instant::now();
    match which.as_str() {
        "tangaroa" => {
            let s = scenarios::explore_split_commit_scenario(ProtocolId::TangaroaLite);
            let b = Bounds { depth: 20, max_emissions: 8, ..Bounds::default() };
            let out = explore(&s, b, Target::ConflictingCommits);
            println!("tangaroa: {} in {:?}", out.summary(), t0.elapsed());
        }
        "bcb" => {
            let s = scenarios::explore_bcast_scenario(ProtocolId::Bcb);
            let b = Bounds { depth: 12, max_emissions: 6, ..Bounds::default() };
            let out = explore(&s, b.clone(), Target::ConflictingCommits);
            println!("bcb consistency: {} in {:?}", out.summary(), t0.elapsed());
            let t1 = Instant::now();
            let out = explore(&s, b, Target::TerminalPartialDelivery);
            println!("bcb partial: {} in {:?}", out.summary(), t1.elapsed());
        }
        "brb" => {
            let s = scenarios::explore_bcast_scenario(ProtocolId::Brb);
            let b = Bounds { depth: 12, max_emissions: 6, ..Bounds::default() };
            let out = explore(&s, b, Target::ConsistencyAndTotality);
            println!("brb: {} in {:?}", out.summary(), t0.elapsed());
        }
        "pbft" => {
            let s = scenarios::explore_split_commit_scenario(ProtocolId::PbftLite);
            let b = Bounds { depth: 20, max_emissions: 6, ..Bounds::default() };
            let out = explore(&s, b, Target::ConflictingCommits);
            println!("pbft: {} in {:?}", out.summary(), t0.elapsed());
        }
        _ => panic!("unknown"),
    }
}
