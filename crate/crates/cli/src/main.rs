fn main() {
    std::process::exit(argmine_cli::run(std::env::args_os()));
}
