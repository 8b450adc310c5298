fn main() {
    std::process::exit(ionsculpt::cli::main());
}
