fn main() {
    std::process::exit(relayflow::harness::cli::run(std::env::args_os()));
}
