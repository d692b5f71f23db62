fn main() {
    std::process::exit(roughfbm::cli::run(std::env::args_os()));
}
