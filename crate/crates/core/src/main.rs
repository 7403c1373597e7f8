fn main() {
    std::process::exit(harvest_rl::cli::run(std::env::args_os()));
}
