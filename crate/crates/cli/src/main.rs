fn main() {
    std::process::exit(srsync_cli::run(std::env::args_os()));
}
