fn main() {
    std::process::exit(emcom::cli::main_with_args(std::env::args_os()));
}
