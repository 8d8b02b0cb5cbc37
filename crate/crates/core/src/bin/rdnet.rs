fn main() {
    std::process::exit(rdnet::cli::main_with_args(std::env::args_os()));
}
