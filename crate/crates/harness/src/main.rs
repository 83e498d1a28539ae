fn main() {
    std::process::exit(bubbletower_harness::cli::run(std::env::args_os()));
}
