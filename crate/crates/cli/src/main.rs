fn main() {
    std::process::exit(xpr_cli::run(std::env::args_os()));
}
