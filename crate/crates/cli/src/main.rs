fn main() {
    std::process::exit(kinseg_cli::args::main_with_args(std::env::args_os()));
}
