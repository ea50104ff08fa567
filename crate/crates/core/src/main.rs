fn main() {
    std::process::exit(quelab::cli::run(std::env::args_os()));
}
