fn main() {
    hoist::cli::init_logging();
    std::process::exit(hoist::cli::main_with_args(std::env::args_os()));
}
