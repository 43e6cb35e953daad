fn main() {
    fixhead::cli::init_logging();
    std::process::exit(fixhead::cli::main_with_args(std::env::args_os()));
}
