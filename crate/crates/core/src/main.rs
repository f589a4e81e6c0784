fn main() {
    std::process::exit(mvn_ngboost::cli::run_from(std::env::args_os()));
}
