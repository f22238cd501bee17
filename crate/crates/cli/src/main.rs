fn main() {
    std::process::exit(indhead_cli::run(std::env::args_os()));
}
