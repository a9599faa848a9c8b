fn main() {
    std::process::exit(ccperim::cli::run(std::env::args_os()));
}
