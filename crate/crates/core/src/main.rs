fn main() {
    std::process::exit(ringpath::cli::main_with_args(std::env::args_os()));
}
