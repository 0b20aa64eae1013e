fn main() {
    std::process::exit(agfa::cli::run_from(std::env::args_os()));
}
