fn main() {
    std::process::exit(fdrcast_cli::run_command(std::env::args_os()));
}
