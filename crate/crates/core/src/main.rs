fn main() {
    std::process::exit(wildriff::cli::run(std::env::args_os()));
}
