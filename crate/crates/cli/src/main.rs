fn main() {
    let code = lzscatter_cli::run_from_args(std::env::args().collect());
    std::process::exit(code);
}
