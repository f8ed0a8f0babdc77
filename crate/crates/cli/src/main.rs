fn main() {
    std::process::exit(fairaudit_cli::main_with(std::env::args_os()));
}
