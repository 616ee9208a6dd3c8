fn main() {
    std::process::exit(length_collapse::cli::run(std::env::args_os()));
}
