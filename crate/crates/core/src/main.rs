fn main() {
    std::process::exit(jumpstart::cli::dispatch(std::env::args_os()));
}
