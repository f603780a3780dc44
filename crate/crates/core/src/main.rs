fn main() {
    std::process::exit(pathbench::cli::run(std::env::args_os()));
}
