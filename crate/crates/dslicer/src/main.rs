fn main() {
    std::process::exit(dslicer::cli::run_cli(std::env::args_os()).code());
}
