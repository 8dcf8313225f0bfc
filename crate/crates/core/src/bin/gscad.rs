fn main() {
    std::process::exit(gscad::cli::run(std::env::args_os()));
}
