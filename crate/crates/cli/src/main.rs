fn main() {
    std::process::exit(searchassist_cli::main_with_args(std::env::args_os()));
}
