fn main() {
    std::process::exit(parabolica::cli::main_with_args(std::env::args_os()));
}
