fn main() {
    std::process::exit(aoii_aloha::cli::run(std::env::args_os()));
}
