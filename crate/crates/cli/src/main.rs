fn main() {
    std::process::exit(picard_cli::run(std::env::args_os()));
}
