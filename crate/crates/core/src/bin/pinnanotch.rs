fn main() {
    std::process::exit(pinnanotch::cli::main_with_args(std::env::args_os()));
}
