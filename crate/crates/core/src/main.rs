fn main() {
    std::process::exit(wavemap::cli::main_with_args(std::env::args_os()));
}
