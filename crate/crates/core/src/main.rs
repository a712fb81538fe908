fn main() {
    std::process::exit(lvadvect::cli::main_with_args(std::env::args_os()));
}
