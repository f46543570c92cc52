fn main() {
    std::process::exit(sdnmt::cli::main_with_args(std::env::args_os()));
}
