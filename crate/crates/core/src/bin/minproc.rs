fn main() {
    std::process::exit(minproc_core::cli::main_from_args(std::env::args_os()));
}
