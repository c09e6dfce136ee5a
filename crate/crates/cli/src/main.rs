fn main() {
    std::process::exit(nhfloquet_cli::run(std::env::args_os()));
}
