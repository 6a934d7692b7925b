fn main() {
    std::process::exit(memdiff::cli::run());
}
