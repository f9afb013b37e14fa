fn main() {
    std::process::exit(fracpmp::cli::run(std::env::args_os()));
}
