fn main() {
    std::process::exit(qcount_cli::run(std::env::args_os()));
}
