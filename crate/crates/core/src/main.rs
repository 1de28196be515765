fn main() {
    std::process::exit(kramers::cli::main_with_args(std::env::args_os()));
}
