fn main() {
    std::process::exit(loewner::cli::run());
}
