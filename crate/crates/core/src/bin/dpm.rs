fn main() {
    std::process::exit(decay_prune::cli::run_cli(std::env::args_os()));
}
