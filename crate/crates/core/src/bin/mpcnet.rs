fn main() {
    let code = mpcnet_core::cli::run(std::env::args());
    std::process::exit(code);
}
