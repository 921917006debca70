fn main() {
    std::process::exit(mutqual::cli::run(std::env::args_os()));
}
