fn main() {
    std::process::exit(duality_core::cli::run(std::env::args_os()));
}
