fn main() {
    std::process::exit(hrtpp::cli::main());
}
