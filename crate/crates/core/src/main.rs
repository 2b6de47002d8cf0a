fn main() {
    std::process::exit(lacsh::cli::run(std::env::args_os()));
}
