fn main() {
    std::process::exit(farfield::cli::run());
}
