fn main() {
    std::process::exit(contina::cli::main_with(std::env::args_os()));
}
