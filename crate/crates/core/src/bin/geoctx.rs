fn main() {
    std::process::exit(geoctx::cli::run(std::env::args_os()));
}
