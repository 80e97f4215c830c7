fn main() {
    std::process::exit(logsieve::cli::run(std::env::args_os()));
}
