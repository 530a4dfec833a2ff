fn main() {
    std::process::exit(flowridge::cli::run(std::env::args_os()));
}
