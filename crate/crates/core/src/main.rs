fn main() {
    std::process::exit(nvolve::cli::run(std::env::args_os()));
}
