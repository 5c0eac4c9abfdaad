fn main() {
    std::process::exit(refmatch::cli::main_with_args(std::env::args_os()));
}
