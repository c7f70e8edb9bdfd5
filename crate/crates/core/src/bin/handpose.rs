fn main() {
    std::process::exit(handpose::cli::run_from(std::env::args_os()));
}
