fn main() {
    std::process::exit(liv::cli::run(std::env::args_os()));
}
