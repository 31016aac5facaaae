fn main() {
    std::process::exit(colombeau::cli::run(std::env::args_os()));
}
