fn main() {
    std::process::exit(icc_cli::run(std::env::args_os()));
}
