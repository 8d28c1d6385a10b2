fn main() {
    std::process::exit(nvlaser_cli::run(std::env::args_os()));
}
