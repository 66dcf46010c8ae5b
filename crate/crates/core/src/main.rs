fn main() {
    std::process::exit(perheat::cli::main_with_args(std::env::args_os()));
}
