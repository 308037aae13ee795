fn main() {
    std::process::exit(ltssl_cli::run(std::env::args_os()));
}
