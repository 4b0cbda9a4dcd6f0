fn main() {
    std::process::exit(likeness_judge::cli::main_with_args(std::env::args_os()));
}
