fn main() {
    std::process::exit(dmdfm::cli::run(std::env::args_os()));
}
