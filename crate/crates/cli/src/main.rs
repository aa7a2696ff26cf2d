fn main() {
    std::process::exit(catds_cli::dispatch(std::env::args_os()));
}
