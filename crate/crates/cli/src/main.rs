fn main() {
    std::process::exit(pathforge::main_with_args(std::env::args_os()));
}
