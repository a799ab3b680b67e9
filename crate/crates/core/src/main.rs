fn main() {
    std::process::exit(nthlab::cli::main_with_args(std::env::args_os()));
}
