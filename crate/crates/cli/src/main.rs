fn main() {
    std::process::exit(gospa_sm_cli::main_with_args(std::env::args_os()));
}
