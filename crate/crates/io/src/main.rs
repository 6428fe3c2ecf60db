fn main() {
    let code = cbc_io::cli::run_cli(std::env::args_os());
    std::process::exit(code);
}
