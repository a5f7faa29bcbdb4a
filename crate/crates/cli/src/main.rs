fn main() {
    std::process::exit(mreval_cli::run(std::env::args_os()));
}
