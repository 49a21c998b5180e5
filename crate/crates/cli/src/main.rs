fn main() {
    std::process::exit(fiberflow_cli::main_with_args(std::env::args_os()));
}
