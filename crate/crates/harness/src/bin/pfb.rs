fn main() {
    std::process::exit(pfbound_harness::cli::run(std::env::args_os()));
}
