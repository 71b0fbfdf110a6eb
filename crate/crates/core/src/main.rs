fn main() {
    std::process::exit(privperturb::cli::run(std::env::args_os()));
}
