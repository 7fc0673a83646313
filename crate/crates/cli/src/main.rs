fn main() {
    std::process::exit(twistqw_cli::main_with_args(std::env::args_os()));
}
