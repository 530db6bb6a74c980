fn main() {
    std::process::exit(amcert_cli::cli::main_with_args(std::env::args_os()));
}
