fn main() {
    std::process::exit(illumaug::cli::main());
}
