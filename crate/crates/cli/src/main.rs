fn main() {
    std::process::exit(brl_cli::main_with(std::env::args_os()));
}
