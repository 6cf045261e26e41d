fn main() {
    std::process::exit(osclab::cli::run(std::env::args_os()));
}
