fn main() {
    std::process::exit(aztec_cli::run_args(std::env::args_os()));
}
