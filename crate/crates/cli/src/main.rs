fn main() {
    std::process::exit(qntl_cli::app::main_with_args(std::env::args_os()));
}
