fn main() {
    std::process::exit(dbar_core::cli::run(std::env::args_os()));
}
