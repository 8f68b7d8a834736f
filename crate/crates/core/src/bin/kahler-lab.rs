fn main() {
    std::process::exit(kahler_lab::cli::main_from_args(std::env::args_os()));
}
