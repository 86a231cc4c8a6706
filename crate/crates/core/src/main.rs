fn main() {
    std::process::exit(hclm::cli::run(std::env::args_os()));
}
