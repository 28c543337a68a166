fn main() {
    std::process::exit(scr_tools::cli::run_cli(std::env::args_os()));
}
