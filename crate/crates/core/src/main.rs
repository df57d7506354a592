fn main() {
    std::process::exit(sensemap::cli::main());
}
