fn main() {
    std::process::exit(sgdtime_cli::run_cli(std::env::args_os()));
}
