fn main() {
    std::process::exit(hsa_cli::main_with_args(std::env::args_os()));
}
