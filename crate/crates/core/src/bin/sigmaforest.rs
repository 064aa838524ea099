fn main() {
    std::process::exit(sigmaforest::cli::main_with(std::env::args_os()));
}
