fn main() {
    std::process::exit(pat::cli::run(std::env::args_os()));
}
