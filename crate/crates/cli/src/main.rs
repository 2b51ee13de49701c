fn main() {
    std::process::exit(rti_nmpc_cli::run(std::env::args_os()));
}
