fn main() {
    std::process::exit(qls_cli::run(std::env::args_os()));
}
