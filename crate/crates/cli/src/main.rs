fn main() {
    std::process::exit(spillover_cli::main_with_args(std::env::args_os()));
}
