fn main() {
    std::process::exit(reorder_cli::run(std::env::args_os()));
}
