fn main() {
    std::process::exit(liouflow::cli::main_entry(std::env::args_os()));
}
