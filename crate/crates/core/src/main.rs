fn main() {
    std::process::exit(linmix::cli::main_with_args(std::env::args_os()));
}
