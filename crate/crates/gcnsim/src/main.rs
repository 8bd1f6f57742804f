fn main() {
    std::process::exit(gcnsim::cli::run());
}
