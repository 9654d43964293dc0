fn main() {
    std::process::exit(conhd::cli::run());
}
