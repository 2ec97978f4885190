fn main() {
    std::process::exit(snn_ensemble::cli::run(std::env::args_os()));
}
