fn main() {
    std::process::exit(quorumlab::harness::cli::main());
}
