fn main() {
    std::process::exit(ehrelay::cli::run(std::env::args_os()));
}
