fn main() {
    std::process::exit(draft::cli::run(std::env::args_os()));
}
