fn main() {
    std::process::exit(submc::cli::main());
}
