fn main() {
    std::process::exit(topiq_cli::run(std::env::args_os()));
}
