fn main() {
    std::process::exit(mpt::cli::main());
}
