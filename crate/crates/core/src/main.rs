fn main() {
    std::process::exit(tremor::cli::main_with_args(std::env::args_os()));
}
