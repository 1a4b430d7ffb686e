fn main() {
    std::process::exit(lumen_cli::run(std::env::args_os()));
}
