fn main() {
    std::process::exit(mixtype_cli::run(std::env::args_os()));
}
