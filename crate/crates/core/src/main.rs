fn main() {
    std::process::exit(dhflow::cli::run(std::env::args_os()));
}
