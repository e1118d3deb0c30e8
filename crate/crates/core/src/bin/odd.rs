fn main() {
    std::process::exit(odd_core::cli::run_command(std::env::args_os()));
}
