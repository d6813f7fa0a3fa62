fn main() {
    std::process::exit(worldsheet::cli::main_with_args(std::env::args_os()));
}
