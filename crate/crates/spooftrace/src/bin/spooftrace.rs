fn main() {
    std::process::exit(spooftrace::cli::run(std::env::args_os()));
}
