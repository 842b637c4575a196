fn main() {
    std::process::exit(growcoag::cli::main_with_args(std::env::args_os()));
}
