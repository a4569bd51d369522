fn main() {
    std::process::exit(zinbarma::cli::run(std::env::args_os()));
}
