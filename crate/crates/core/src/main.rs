fn main() {
    std::process::exit(riskwild::cli::run_from(std::env::args_os()));
}
