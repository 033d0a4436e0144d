fn main() {
    std::process::exit(gauss_ergodic::cli::run(std::env::args_os()));
}
